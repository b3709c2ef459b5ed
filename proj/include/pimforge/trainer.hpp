#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pimforge/dataset.hpp"
#include "pimforge/model.hpp"
#include "pimforge/network.hpp"
#include "pimforge/rng.hpp"
#include "pimforge/threads.hpp"

namespace pimforge {

// Per-layer parameter gradients, flat and parallel to the layer's weight and
// bias storage.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const Model& model) {
    Gradients g;
    g.weights.reserve(model.layers.size());
    g.biases.reserve(model.layers.size());
    for (const LayerParams& layer : model.layers) {
      g.weights.emplace_back(layer.weights.size(), 0.0);
      g.biases.emplace_back(layer.biases.size(), 0.0);
    }
    return g;
  }

  void scale(double s) {
    for (auto& w : weights) {
      for (double& v : w) v *= s;
    }
    for (auto& b : biases) {
      for (double& v : b) v *= s;
    }
  }
};

struct LayerCache {
  Volume input;    // layer input, already flattened for FC
  Volume pre_act;  // convolution output plus bias
  Volume act;      // after activation
  Volume pooled;   // after pooling (== act when the layer has no pool)
  std::vector<std::size_t> pool_argmax;  // flat index into act per pooled cell
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> logits;
};

namespace detail {

inline Volume flatten(const Volume& v) {
  Volume out;
  out.channels = v.channels * v.height * v.width;
  out.height = 1;
  out.width = 1;
  out.values = v.values;  // channel-major layout flattens in place
  return out;
}

inline void conv_forward(const Tensor4& w, std::span<const double> bias, const Volume& in,
                         std::size_t stride, Volume& out) {
  const LayerShape& s = w.shape();
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        double acc = bias[f];
        for (std::size_t c = 0; c < s.channels; ++c) {
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
              acc += w.at(f, c, ky, kx) * in.at(c, oy * stride + ky, ox * stride + kx);
            }
          }
        }
        out.at(f, oy, ox) = acc;
      }
    }
  }
}

inline void max_pool_forward(const Volume& in, Volume& out, std::vector<std::size_t>& argmax) {
  argmax.assign(out.size(), 0);
  for (std::size_t c = 0; c < out.channels; ++c) {
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        // first maximum wins; scan order is fixed
        std::size_t best = in.offset(c, 2 * oy, 2 * ox);
        double best_v = in.values[best];
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in.offset(c, 2 * oy + dy, 2 * ox + dx);
            if (in.values[idx] > best_v) {
              best_v = in.values[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = out.offset(c, oy, ox);
        out.values[o] = best_v;
        argmax[o] = best;
      }
    }
  }
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - max_logit);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace detail

// Deterministic single-sample forward pass; CONV is valid cross-correlation.
inline ForwardCache forward(const Model& model, const NetworkDef& net, const Volume& input) {
  if (input.channels != net.input_channels || input.height != net.input_h ||
      input.width != net.input_w) {
    throw ConfigError("forward: input volume does not match network input shape");
  }
  ForwardCache cache;
  cache.layers.resize(net.layers.size());
  Volume cur = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& nl = net.layers[i];
    LayerCache& lc = cache.layers[i];
    lc.input = nl.shape.kind == LayerKind::Fc ? detail::flatten(cur) : cur;
    lc.pre_act = Volume(nl.shape.filters, nl.out_h, nl.out_w);
    detail::conv_forward(model.layers[i].weights, model.layers[i].biases, lc.input,
                         nl.shape.stride, lc.pre_act);
    lc.act = lc.pre_act;
    if (nl.relu) {
      for (double& v : lc.act.values) v = v > 0.0 ? v : 0.0;
    }
    if (nl.pool) {
      lc.pooled = Volume(nl.shape.filters, nl.pooled_h, nl.pooled_w);
      detail::max_pool_forward(lc.act, lc.pooled, lc.pool_argmax);
    } else {
      lc.pooled = lc.act;
    }
    cur = lc.pooled;
  }
  cache.logits = cur.values;
  return cache;
}

// Cross-entropy of one cached sample; accumulates analytic gradients of the
// *sum* loss (callers divide by batch size).
inline double backward(const Model& model, const NetworkDef& net, const ForwardCache& cache,
                       int label, Gradients& grads) {
  const std::vector<double> probs = detail::softmax(cache.logits);
  const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));

  Volume delta;  // gradient w.r.t. the current layer's pooled output
  delta.channels = net.layers.back().shape.filters;
  delta.height = delta.width = 1;
  delta.values = probs;
  delta.values[static_cast<std::size_t>(label)] -= 1.0;

  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const NetLayer& nl = net.layers[i];
    const LayerCache& lc = cache.layers[i];
    const Tensor4& w = model.layers[i].weights;
    const LayerShape& s = nl.shape;

    // undo pooling
    Volume d_act;
    if (nl.pool) {
      d_act = Volume(s.filters, nl.out_h, nl.out_w);
      for (std::size_t o = 0; o < delta.size(); ++o) {
        d_act.values[lc.pool_argmax[o]] += delta.values[o];
      }
    } else {
      d_act = delta;
    }
    // undo activation
    if (nl.relu) {
      for (std::size_t o = 0; o < d_act.size(); ++o) {
        if (lc.pre_act.values[o] <= 0.0) d_act.values[o] = 0.0;
      }
    }
    // parameter gradients and input delta
    std::vector<double>& gw = grads.weights[i];
    std::vector<double>& gb = grads.biases[i];
    Volume d_in(lc.input.channels, lc.input.height, lc.input.width);
    for (std::size_t f = 0; f < s.filters; ++f) {
      for (std::size_t oy = 0; oy < nl.out_h; ++oy) {
        for (std::size_t ox = 0; ox < nl.out_w; ++ox) {
          const double d = d_act.at(f, oy, ox);
          if (d == 0.0) continue;
          gb[f] += d;
          for (std::size_t c = 0; c < s.channels; ++c) {
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const std::size_t iy = oy * s.stride + ky;
                const std::size_t ix = ox * s.stride + kx;
                gw[w.offset(f, c, ky, kx)] += d * lc.input.at(c, iy, ix);
                d_in.at(c, iy, ix) += d * w.at(f, c, ky, kx);
              }
            }
          }
        }
      }
    }
    if (i > 0) {
      // reshape the FC input delta back to the producing layer's output map
      const NetLayer& prev = net.layers[i - 1];
      if (s.kind == LayerKind::Fc && prev.shape.kind == LayerKind::Conv) {
        Volume reshaped(prev.shape.filters, prev.pooled_h, prev.pooled_w);
        reshaped.values = std::move(d_in.values);
        delta = std::move(reshaped);
      } else {
        delta = std::move(d_in);
      }
    }
  }
  return loss;
}

// Mean cross-entropy and its exact gradients over a batch. Accumulation
// order is fixed (sample order), so results are scheduling-independent.
inline double batch_loss_and_gradients(const Model& model, const NetworkDef& net,
                                       const TrainingBatch& batch, Gradients& grads) {
  if (batch.size() == 0) throw ConfigError("empty training batch");
  grads = Gradients::zeros_like(model);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardCache cache = forward(model, net, batch.inputs[i]);
    total += backward(model, net, cache, batch.labels[i], grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  return total * inv;
}

// w := w - lr * g on unmasked positions; masked-off positions are untouched
// and therefore stay exactly zero once zeroed.
inline void sgd_step(Model& model, const Gradients& grads, double learning_rate,
                     const std::vector<std::vector<std::uint8_t>>* weight_masks = nullptr) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerParams& layer = model.layers[i];
    const std::vector<double>& gw = grads.weights[i];
    const std::vector<std::uint8_t>* mask =
        weight_masks != nullptr ? &(*weight_masks)[i] : nullptr;
    auto values = layer.weights.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (mask == nullptr || (*mask)[k]) values[k] -= learning_rate * gw[k];
    }
    for (std::size_t k = 0; k < layer.biases.size(); ++k) {
      layer.biases[k] -= learning_rate * grads.biases[i][k];
    }
  }
}

inline int predict(const Model& model, const NetworkDef& net, const Volume& input) {
  const ForwardCache cache = forward(model, net, input);
  int best = 0;
  for (std::size_t k = 1; k < cache.logits.size(); ++k) {
    if (cache.logits[k] > cache.logits[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Top-1 accuracy. Sample results land in disjoint slots, so the parallel
// path is exactly equivalent to the sequential one.
inline double evaluate(const Model& model, const NetworkDef& net, const Dataset& data,
                       unsigned threads = 1) {
  if (data.size() == 0) throw ConfigError("evaluate: dataset is empty");
  std::vector<std::uint8_t> correct(data.size(), 0);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    correct[i] = predict(model, net, data.volume(i)) == data.labels[i] ? 1 : 0;
  });
  std::size_t hits = 0;
  for (std::uint8_t c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Mean cross-entropy over a dataset (diagnostic).
inline double mean_loss(const Model& model, const NetworkDef& net, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardCache cache = forward(model, net, data.volume(i));
    const std::vector<double> probs = detail::softmax(cache.logits);
    total += -std::log(
        std::max(probs[static_cast<std::size_t>(data.labels[i])], 1e-300));
  }
  return total / static_cast<double>(data.size());
}

// Mini-batch SGD problem over a dataset: the loss f and its gradients,
// consumed by the ADMM engine.
class CnnProblem {
 public:
  CnnProblem(const Dataset& data, NetworkDef net, std::size_t batch_size)
      : data_(&data), net_(std::move(net)), batch_size_(std::max<std::size_t>(1, batch_size)) {
    order_.resize(data.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }

  const NetworkDef& net() const { return net_; }
  const Dataset& data() const { return *data_; }

  std::size_t steps_per_epoch() const {
    return (data_->size() + batch_size_ - 1) / batch_size_;
  }

  void start_epoch(Rng& rng) { shuffle(order_, rng); }

  double loss_and_grad(const Model& model, std::size_t step, Gradients& grads) const {
    const std::size_t begin = (step % steps_per_epoch()) * batch_size_;
    const std::size_t end = std::min(begin + batch_size_, data_->size());
    const TrainingBatch batch =
        make_batch(*data_, std::span<const std::size_t>(order_).subspan(begin, end - begin));
    return batch_loss_and_gradients(model, net_, batch, grads);
  }

 private:
  const Dataset* data_;
  NetworkDef net_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

// Kaiming-style random initialization; fully determined by the seed.
inline void randomize_weights(Model& model, Rng& rng) {
  for (LayerParams& layer : model.layers) {
    const LayerShape& s = layer.weights.shape();
    const double fan_in = static_cast<double>(s.channels * s.kernel_elems());
    const double scale = std::sqrt(2.0 / fan_in);
    for (double& v : layer.weights.values()) v = scale * rng.normal();
    for (double& b : layer.biases) b = 0.0;
  }
}

}  // namespace pimforge
