#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pimforge/bitserial.hpp"
#include "pimforge/model.hpp"
#include "pimforge/quantize.hpp"

namespace pimforge {

enum class RemovalMode { Physical, Lut };

inline const char* removal_mode_name(RemovalMode m) {
  return m == RemovalMode::Physical ? "physical" : "lut";
}

// One memory tile holding the bit planes of one kernel's weights. Rows are
// bit planes (rows == weight_bits), columns are kernel cells (cols == H*W).
struct SubArray {
  std::size_t filter = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool pruned = false;  // kernel all-zero; only Lut mode keeps such arrays
  std::vector<std::int64_t> kernel_levels;  // cols signed quantization levels

  std::size_t cells() const { return rows * cols; }
  bool operator==(const SubArray&) const = default;
};

// Decoder + computing set + the sub-arrays serving one input channel.
struct ProcessingElement {
  std::size_t channel = 0;
  std::size_t input_rows = 0;  // == input_bits
  std::size_t input_cols = 0;  // == kernel H*W
  bool pruned = false;         // whole channel zero; only Lut mode keeps such PEs
  std::vector<SubArray> weight_subarrays;
  std::vector<std::uint8_t> skip_lut;  // 1 exactly where the sub-array is pruned

  std::size_t input_cells() const { return input_rows * input_cols; }
  bool operator==(const ProcessingElement&) const = default;
};

struct PimLayerLayout {
  LayerShape shape;
  QuantSpec quant;
  std::vector<ProcessingElement> pes;

  bool operator==(const PimLayerLayout&) const = default;
};

struct PimLayout {
  RemovalMode mode = RemovalMode::Physical;
  std::vector<PimLayerLayout> layers;
  std::optional<std::int64_t> seed;  // provenance

  bool operator==(const PimLayout&) const = default;
};

namespace detail {

inline bool kernel_is_zero(const Tensor4& w, std::size_t f, std::size_t c) {
  const LayerShape& s = w.shape();
  for (std::size_t h = 0; h < s.kernel_h; ++h) {
    for (std::size_t x = 0; x < s.kernel_w; ++x) {
      if (w.at(f, c, h, x) != 0.0) return false;
    }
  }
  return true;
}

inline bool channel_is_zero(const Tensor4& w, std::size_t c) {
  for (std::size_t f = 0; f < w.shape().filters; ++f) {
    if (!kernel_is_zero(w, f, c)) return false;
  }
  return true;
}

inline bool filter_is_zero(const Tensor4& w, std::size_t f) {
  for (std::size_t c = 0; c < w.shape().channels; ++c) {
    if (!kernel_is_zero(w, f, c)) return false;
  }
  return true;
}

}  // namespace detail

// Maps a compressed, quantized model onto PEs and sub-arrays. Layer i yields
// C_i PEs, one per input channel, each holding F_i weight sub-arrays.
// Pruning translates to hardware as: all-zero channel -> PE removed or
// skipped, all-zero filter -> that sub-array position removed in every PE,
// all-zero kernel -> the single sub-array removed or skipped.
inline PimLayout build_layout(const Model& model, RemovalMode mode) {
  model.validate();
  PimLayout layout;
  layout.mode = mode;
  layout.seed = model.seed;
  for (std::size_t li = 0; li < model.num_layers(); ++li) {
    const LayerParams& layer = model.layers[li];
    if (!layer.quant) {
      throw ConfigError("layer " + std::to_string(li) +
                        " has no quantization spec; sub-array rows are undefined without a "
                        "bit-length (run compression with quantization first)");
    }
    const QuantSpec& q = *layer.quant;
    if (!on_weight_grid(layer.weights, q)) {
      throw ConfigError("layer " + std::to_string(li) +
                        " has weights off the quantization grid; quantize before mapping");
    }
    const LayerShape& s = layer.weights.shape();
    PimLayerLayout pll;
    pll.shape = s;
    pll.quant = q;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const bool channel_zero = detail::channel_is_zero(layer.weights, c);
      if (channel_zero && mode == RemovalMode::Physical) continue;
      ProcessingElement pe;
      pe.channel = c;
      pe.input_rows = q.input_bits;
      pe.input_cols = s.kernel_elems();
      pe.pruned = channel_zero;
      for (std::size_t f = 0; f < s.filters; ++f) {
        const bool kernel_zero = detail::kernel_is_zero(layer.weights, f, c);
        if (kernel_zero && mode == RemovalMode::Physical) continue;
        SubArray sa;
        sa.filter = f;
        sa.rows = q.weight_bits;
        sa.cols = s.kernel_elems();
        sa.pruned = kernel_zero;
        sa.kernel_levels.reserve(sa.cols);
        for (std::size_t h = 0; h < s.kernel_h; ++h) {
          for (std::size_t x = 0; x < s.kernel_w; ++x) {
            sa.kernel_levels.push_back(nearest_weight_level(layer.weights.at(f, c, h, x), q));
          }
        }
        pe.skip_lut.push_back(kernel_zero ? 1 : 0);
        pe.weight_subarrays.push_back(std::move(sa));
      }
      pll.pes.push_back(std::move(pe));
    }
    layout.layers.push_back(std::move(pll));
  }
  return layout;
}

// Per-layer trace with the scheduling view the cost model needs: PEs run in
// parallel, sub-arrays within a PE run sequentially.
struct LayerTrace {
  std::size_t layer = 0;
  std::uint64_t kernel_positions = 0;   // output positions per inference
  std::uint64_t active_pes = 0;         // PEs that did any work
  std::uint64_t max_row_ops_per_pe = 0; // sequential AND row ops on the critical PE
  BitConvTrace ops;

  bool operator==(const LayerTrace&) const = default;
};

struct SimTrace {
  std::vector<LayerTrace> layers;

  BitConvTrace total() const {
    BitConvTrace t;
    for (const LayerTrace& l : layers) t += l.ops;
    return t;
  }
  bool operator==(const SimTrace&) const = default;
};

struct LayerSimResult {
  IntVolume output;
  LayerTrace trace;
};

// Runs one layer of the layout on an integer input volume. Output is
// bit-exact with bitwise_conv2d over the unpruned weights; skipped and
// removed sub-arrays contribute neither values nor trace counts.
inline LayerSimResult simulate_layer(const PimLayout& layout, std::size_t layer_index,
                                     const IntVolume& input) {
  if (layer_index >= layout.layers.size()) {
    throw ConfigError("simulate_layer: layer index out of range");
  }
  const PimLayerLayout& pll = layout.layers[layer_index];
  const LayerShape& s = pll.shape;
  const QuantSpec& q = pll.quant;
  if (input.channels != s.channels) {
    throw ConfigError("simulate_layer: input channels " + std::to_string(input.channels) +
                      " do not match layer channels " + std::to_string(s.channels));
  }
  if (input.height < s.kernel_h || input.width < s.kernel_w) {
    throw ConfigError("simulate_layer: kernel larger than input");
  }
  detail::check_bit_range(input.values, q.input_bits, false, "input");

  const std::size_t out_h = (input.height - s.kernel_h) / s.stride + 1;
  const std::size_t out_w = (input.width - s.kernel_w) / s.stride + 1;

  LayerSimResult result;
  result.output = IntVolume(s.filters, out_h, out_w);
  result.trace.layer = layer_index;
  result.trace.kernel_positions = out_h * out_w;

  const std::size_t ke = s.kernel_elems();
  std::vector<std::int64_t> scratch(ke);
  for (const ProcessingElement& pe : pll.pes) {
    if (pe.pruned) continue;
    // bit planes for this PE's live kernels, shared across positions
    std::vector<const SubArray*> live;
    std::vector<BitPlanes> planes;
    for (const SubArray& sa : pe.weight_subarrays) {
      if (sa.pruned) continue;
      live.push_back(&sa);
      planes.push_back(BitPlanes::decompose(sa.kernel_levels, q.weight_mag_bits(),
                                            q.signed_weights));
    }
    if (live.empty()) continue;
    result.trace.active_pes += 1;
    BitConvTrace pe_ops;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        for (std::size_t kyx = 0; kyx < ke; ++kyx) {
          const std::size_t ky = kyx / s.kernel_w;
          const std::size_t kx = kyx % s.kernel_w;
          scratch[kyx] = input.at(pe.channel, oy * s.stride + ky, ox * s.stride + kx);
        }
        const BitPlanes tile = BitPlanes::decompose(scratch, q.input_bits, false);
        pe_ops.input_writes += 1;
        for (std::size_t k = 0; k < live.size(); ++k) {
          result.output.at(live[k]->filter, oy, ox) += bitwise_dot(tile, planes[k], &pe_ops);
        }
      }
    }
    result.trace.max_row_ops_per_pe =
        std::max(result.trace.max_row_ops_per_pe, pe_ops.and_row_ops);
    result.trace.ops += pe_ops;
  }
  return result;
}

struct LayerLayoutStats {
  std::size_t pes = 0;                // physically present
  std::size_t weight_subarrays = 0;
  std::size_t weight_rows = 0;
  std::size_t weight_cells = 0;
  std::size_t input_cells = 0;
  std::size_t effective_pes = 0;      // not skipped
  std::size_t effective_weight_subarrays = 0;
};

struct LayoutStats {
  std::vector<LayerLayoutStats> layers;
  LayerLayoutStats total;
};

// Raw counts describe the silicon; effective counts describe the work. The
// two coincide in Physical mode.
inline LayoutStats layout_stats(const PimLayout& layout) {
  LayoutStats stats;
  for (const PimLayerLayout& pll : layout.layers) {
    LayerLayoutStats ls;
    for (const ProcessingElement& pe : pll.pes) {
      ls.pes += 1;
      ls.input_cells += pe.input_cells();
      bool any_live = false;
      for (const SubArray& sa : pe.weight_subarrays) {
        ls.weight_subarrays += 1;
        ls.weight_rows += sa.rows;
        ls.weight_cells += sa.cells();
        if (!sa.pruned) {
          ls.effective_weight_subarrays += 1;
          any_live = true;
        }
      }
      if (!pe.pruned && any_live) ls.effective_pes += 1;
    }
    stats.layers.push_back(ls);
    stats.total.pes += ls.pes;
    stats.total.weight_subarrays += ls.weight_subarrays;
    stats.total.weight_rows += ls.weight_rows;
    stats.total.weight_cells += ls.weight_cells;
    stats.total.input_cells += ls.input_cells;
    stats.total.effective_pes += ls.effective_pes;
    stats.total.effective_weight_subarrays += ls.effective_weight_subarrays;
  }
  return stats;
}

// Spatial fan-out of one output channel of layer i into layer i+1's input
// channels (1 except across the CONV->FC flatten, where it is the flattened
// feature-map size).
inline std::size_t channel_group_span(const Model& model, std::size_t producer_layer) {
  const std::size_t next = producer_layer + 1;
  const std::size_t prev_f = model.layers[producer_layer].weights.shape().filters;
  const std::size_t cur_c = model.layers[next].weights.shape().channels;
  return cur_c / prev_f;
}

// Removes provably redundant weights across layer boundaries, to fixpoint:
//   - an all-zero channel c of layer i makes filter c of layer i-1 unused;
//   - an all-zero filter f of layer i with bias <= 0 produces an exactly
//     zero activation map, so channel f of layer i+1 can be zeroed.
// The bias condition keeps the network function unchanged on every input:
// a positive bias would leak a nonzero constant through the ReLU.
inline Model propagate_pruning(Model model) {
  model.validate();
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < model.num_layers(); ++i) {
      Tensor4& cur = model.layers[i].weights;
      Tensor4& next = model.layers[i + 1].weights;
      const std::size_t span = channel_group_span(model, i);
      const LayerShape& cs = cur.shape();
      const LayerShape& ns = next.shape();
      for (std::size_t f = 0; f < cs.filters; ++f) {
        bool group_zero = true;
        for (std::size_t c = f * span; c < (f + 1) * span && group_zero; ++c) {
          group_zero = detail::channel_is_zero(next, c);
        }
        const bool fil_zero = detail::filter_is_zero(cur, f);
        // backward: nothing consumes this filter's activation
        if (group_zero && !fil_zero) {
          for (std::size_t c = 0; c < cs.channels; ++c) {
            for (std::size_t h = 0; h < cs.kernel_h; ++h) {
              for (std::size_t x = 0; x < cs.kernel_w; ++x) cur.at(f, c, h, x) = 0.0;
            }
          }
          changed = true;
        }
        // forward: this filter's activation is exactly zero everywhere
        if (fil_zero && model.layers[i].biases[f] <= 0.0 && !group_zero) {
          for (std::size_t c = f * span; c < (f + 1) * span; ++c) {
            for (std::size_t g = 0; g < ns.filters; ++g) {
              for (std::size_t h = 0; h < ns.kernel_h; ++h) {
                for (std::size_t x = 0; x < ns.kernel_w; ++x) next.at(g, c, h, x) = 0.0;
              }
            }
          }
          changed = true;
        }
      }
    }
  }
  return model;
}

}  // namespace pimforge
