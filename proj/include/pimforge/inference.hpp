#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pimforge/bitserial.hpp"
#include "pimforge/model.hpp"
#include "pimforge/network.hpp"
#include "pimforge/pim.hpp"
#include "pimforge/quantize.hpp"
#include "pimforge/reference.hpp"
#include "pimforge/trainer.hpp"

namespace pimforge {

// Integer convolution engine for one layer; the only piece that differs
// between the reference, bit-serial and PIM-simulated inference paths.
using ConvBackend =
    std::function<IntVolume(std::size_t layer, const IntVolume& input, BitConvTrace* trace)>;

inline ConvBackend reference_backend(const Model& model) {
  return [&model](std::size_t layer, const IntVolume& input, BitConvTrace*) {
    const LayerParams& lp = model.layers[layer];
    const IntTensor4 levels = weight_levels(lp.weights, *lp.quant);
    return reference::int_conv2d(input, levels, lp.weights.shape().stride);
  };
}

inline ConvBackend bitserial_backend(const Model& model) {
  return [&model](std::size_t layer, const IntVolume& input, BitConvTrace* trace) {
    const LayerParams& lp = model.layers[layer];
    const QuantSpec& q = *lp.quant;
    const IntTensor4 levels = weight_levels(lp.weights, q);
    return bitwise_conv2d(input, levels, lp.weights.shape().stride, q.input_bits,
                          q.weight_mag_bits(), q.signed_weights, trace);
  };
}

inline ConvBackend pim_backend(const PimLayout& layout, SimTrace* sim_trace = nullptr) {
  return [&layout, sim_trace](std::size_t layer, const IntVolume& input, BitConvTrace* trace) {
    LayerSimResult r = simulate_layer(layout, layer, input);
    if (trace) *trace += r.trace.ops;
    if (sim_trace) {
      if (sim_trace->layers.size() <= layer) sim_trace->layers.resize(layer + 1);
      sim_trace->layers[layer] = r.trace;
    }
    return std::move(r.output);
  };
}

// Fixed-point forward pass. Per layer: the input is clamped and quantized to
// the unsigned input grid, convolved in exact integer arithmetic, rescaled by
// the two binary points (a pure shift), then bias, activation and pooling run
// in the real domain. Identical across backends because every backend
// computes the identical integers.
inline std::vector<double> quantized_forward(const Model& model, const NetworkDef& net,
                                             const Volume& image, const ConvBackend& backend,
                                             BitConvTrace* trace = nullptr) {
  if (model.num_layers() != net.layers.size()) {
    throw ConfigError("quantized_forward: model and network layer counts differ");
  }
  Volume cur = image;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& nl = net.layers[i];
    const LayerParams& lp = model.layers[i];
    if (!lp.quant) {
      throw ConfigError("layer " + std::to_string(i) + " has no quantization spec");
    }
    const QuantSpec& q = *lp.quant;
    if (nl.shape.kind == LayerKind::Fc) cur = detail::flatten(cur);
    const IntVolume x_int = quantize_input(cur, q);
    const IntVolume acc = backend(i, x_int, trace);
    const double scale =
        std::ldexp(1.0, -static_cast<int>(q.frac_bits) - static_cast<int>(q.input_frac_bits));
    Volume real(acc.channels, acc.height, acc.width);
    for (std::size_t f = 0; f < acc.channels; ++f) {
      const double bias = lp.biases[f];
      for (std::size_t y = 0; y < acc.height; ++y) {
        for (std::size_t x = 0; x < acc.width; ++x) {
          real.at(f, y, x) = static_cast<double>(acc.at(f, y, x)) * scale + bias;
        }
      }
    }
    if (nl.relu) {
      for (double& v : real.values) v = v > 0.0 ? v : 0.0;
    }
    if (nl.pool) {
      Volume pooled(nl.shape.filters, nl.pooled_h, nl.pooled_w);
      std::vector<std::size_t> argmax;
      detail::max_pool_forward(real, pooled, argmax);
      cur = std::move(pooled);
    } else {
      cur = std::move(real);
    }
  }
  return cur.values;
}

// Chooses each layer's input binary point so the unsigned grid covers the
// activations that actually reach it, with headroom for quantization noise.
// Coarser points cost precision; finer points saturate. The maximum is taken
// over a fixed sample prefix, so the result is deterministic.
inline void calibrate_input_scales(Model& model, const NetworkDef& net, const Dataset& data,
                                   std::size_t max_samples = 256, double headroom = 1.25) {
  const std::size_t n = std::min(max_samples, data.size());
  if (n == 0) throw ConfigError("calibrate_input_scales: no samples");
  std::vector<double> peak(model.num_layers(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const Volume image = data.volume(s);
    const ForwardCache cache = forward(model, net, image);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      for (double v : cache.layers[i].input.values) {
        peak[i] = std::max(peak[i], v);
      }
    }
  }
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (!model.layers[i].quant) continue;
    QuantSpec q = *model.layers[i].quant;
    const double max_level = static_cast<double>(q.max_input_level());
    unsigned frac = q.input_bits;
    if (peak[i] > 0.0) {
      const double budget = max_level / (headroom * peak[i]);
      const int f = static_cast<int>(std::floor(std::log2(budget)));
      frac = static_cast<unsigned>(std::clamp(f, 0, static_cast<int>(q.input_bits)));
    }
    q.input_frac_bits = frac;
    model.layers[i].quant = q;
  }
}

inline int argmax_label(const std::vector<double>& logits) {
  int best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

inline int quantized_predict(const Model& model, const NetworkDef& net, const Volume& image,
                             const ConvBackend& backend) {
  return argmax_label(quantized_forward(model, net, image, backend));
}

inline double evaluate_quantized(const Model& model, const NetworkDef& net, const Dataset& data,
                                 const ConvBackend& backend, std::size_t max_samples = 0,
                                 unsigned threads = 1) {
  const std::size_t n = max_samples == 0 ? data.size() : std::min(max_samples, data.size());
  if (n == 0) throw ConfigError("evaluate_quantized: no samples");
  std::vector<std::uint8_t> correct(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    correct[i] = quantized_predict(model, net, data.volume(i), backend) == data.labels[i] ? 1 : 0;
  });
  std::size_t hits = 0;
  for (std::uint8_t c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace pimforge
