#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pimforge/tensor.hpp"

namespace pimforge {

// Fixed-point format shared by the quantizer, the bit-serial engine and the
// PIM layout. Weights are signed sign-magnitude on a power-of-two grid with
// step 2^-frac_bits; inputs are unsigned (post-ReLU activations).
struct QuantSpec {
  unsigned weight_bits = 8;
  unsigned input_bits = 8;
  unsigned frac_bits = 6;        // weight binary point
  unsigned input_frac_bits = 6;  // input binary point
  bool signed_weights = true;

  void validate() const {
    if (weight_bits < 1 || weight_bits > 16) {
      throw InvariantError("quant: weight_bits must be in [1, 16]");
    }
    if (input_bits < 1 || input_bits > 16) {
      throw InvariantError("quant: input_bits must be in [1, 16]");
    }
    if (frac_bits >= weight_bits) {
      throw InvariantError("quant: frac_bits must be < weight_bits");
    }
    if (input_frac_bits > input_bits) {
      throw InvariantError("quant: input_frac_bits must be <= input_bits");
    }
    if (signed_weights && weight_bits < 2) {
      throw InvariantError("quant: signed weights need at least 2 bits");
    }
  }

  // Magnitude bit count on the bit-serial datapath; the sign travels on its
  // own row of the weight sub-array.
  unsigned weight_mag_bits() const { return signed_weights ? weight_bits - 1 : weight_bits; }

  std::int64_t max_weight_level() const {
    return (std::int64_t{1} << weight_mag_bits()) - 1;
  }
  std::int64_t max_input_level() const { return (std::int64_t{1} << input_bits) - 1; }

  double weight_step() const { return std::ldexp(1.0, -static_cast<int>(frac_bits)); }
  double input_step() const { return std::ldexp(1.0, -static_cast<int>(input_frac_bits)); }

  double max_weight_value() const { return static_cast<double>(max_weight_level()) * weight_step(); }
  double max_input_value() const { return static_cast<double>(max_input_level()) * input_step(); }

  bool operator==(const QuantSpec&) const = default;
};

struct LayerParams {
  Tensor4 weights;
  std::vector<double> biases;      // length F; never pruned or quantized
  std::optional<QuantSpec> quant;  // set once the layer has been quantized

  bool operator==(const LayerParams&) const = default;
};

// An ordered stack of CONV layers followed by FC layers. The shared
// vocabulary of every other module.
struct Model {
  std::vector<LayerParams> layers;
  std::size_t num_conv_layers = 0;   // M; the first M layers are CONV
  std::optional<std::int64_t> seed;  // provenance, recorded by the CLI

  std::size_t num_layers() const { return layers.size(); }

  bool operator==(const Model&) const = default;

  void validate() const {
    if (layers.empty()) throw InvariantError("model has no layers");
    if (num_conv_layers < 1 || num_conv_layers > layers.size()) {
      throw InvariantError("model: num_conv_layers (M) must satisfy 1 <= M <= N");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string where = "layer " + std::to_string(i) + ": ";
      const LayerParams& layer = layers[i];
      try {
        layer.weights.shape().validate();
      } catch (const Error& e) {
        throw InvariantError(where + e.what());
      }
      const LayerKind expected = i < num_conv_layers ? LayerKind::Conv : LayerKind::Fc;
      if (layer.weights.shape().kind != expected) {
        throw InvariantError(where + "layer kind does not match position (first M layers are CONV)");
      }
      if (!layer.weights.all_finite()) {
        throw InvariantError(where + "weights contain NaN or Inf");
      }
      if (layer.biases.size() != layer.weights.shape().filters) {
        throw InvariantError(where + "bias length " + std::to_string(layer.biases.size()) +
                             " does not match filter count " +
                             std::to_string(layer.weights.shape().filters));
      }
      for (double b : layer.biases) {
        if (!std::isfinite(b)) throw InvariantError(where + "biases contain NaN or Inf");
      }
      if (layer.quant) {
        try {
          layer.quant->validate();
        } catch (const Error& e) {
          throw InvariantError(where + e.what());
        }
      }
    }
    for (std::size_t i = 1; i < layers.size(); ++i) {
      const std::size_t prev_f = layers[i - 1].weights.shape().filters;
      const std::size_t cur_c = layers[i].weights.shape().channels;
      const bool flatten_boundary = i == num_conv_layers && i < layers.size();
      if (flatten_boundary) {
        // CONV -> FC: the FC input is the flattened feature map, so the
        // channel count must be a whole multiple of the CONV filter count.
        if (cur_c % prev_f != 0) {
          throw InvariantError("layer " + std::to_string(i) + ": input channels " +
                               std::to_string(cur_c) + " not a multiple of previous filters " +
                               std::to_string(prev_f) + " at the CONV->FC boundary");
        }
      } else if (cur_c != prev_f) {
        throw InvariantError("layer " + std::to_string(i) + ": input channels " +
                             std::to_string(cur_c) + " do not match previous filters " +
                             std::to_string(prev_f));
      }
    }
  }
};

struct LayerSparsity {
  std::size_t nonzero_filters = 0;
  std::size_t nonzero_channels = 0;
  std::size_t nonzero_kernels = 0;
  std::size_t nonzero_weights = 0;
  std::size_t total_weights = 0;
};

struct SparsityReport {
  std::vector<LayerSparsity> layers;
  std::size_t conv_total_weights = 0;
  std::size_t conv_nonzero_weights = 0;
  // dense CONV weight count / nonzero CONV weight count; +inf for an
  // all-zero CONV stack (pathological, the pipeline never produces it)
  double conv_compression_rate = 1.0;
};

inline LayerSparsity layer_sparsity(const Tensor4& w) {
  const LayerShape& s = w.shape();
  LayerSparsity out;
  out.total_weights = w.size();
  std::vector<char> filter_nz(s.filters, 0);
  std::vector<char> channel_nz(s.channels, 0);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      bool kernel_nz = false;
      for (std::size_t h = 0; h < s.kernel_h; ++h) {
        for (std::size_t x = 0; x < s.kernel_w; ++x) {
          if (w.at(f, c, h, x) != 0.0) {
            kernel_nz = true;
            ++out.nonzero_weights;
          }
        }
      }
      if (kernel_nz) {
        ++out.nonzero_kernels;
        filter_nz[f] = 1;
        channel_nz[c] = 1;
      }
    }
  }
  for (char v : filter_nz) out.nonzero_filters += v;
  for (char v : channel_nz) out.nonzero_channels += v;
  return out;
}

inline SparsityReport sparsity_report(const Model& model) {
  SparsityReport report;
  report.layers.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerSparsity ls = layer_sparsity(model.layers[i].weights);
    if (i < model.num_conv_layers) {
      report.conv_total_weights += ls.total_weights;
      report.conv_nonzero_weights += ls.nonzero_weights;
    }
    report.layers.push_back(ls);
  }
  report.conv_compression_rate =
      report.conv_nonzero_weights == 0
          ? std::numeric_limits<double>::infinity()
          : static_cast<double>(report.conv_total_weights) /
                static_cast<double>(report.conv_nonzero_weights);
  return report;
}

}  // namespace pimforge
