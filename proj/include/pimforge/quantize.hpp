#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pimforge/model.hpp"
#include "pimforge/tensor.hpp"

namespace pimforge {

// Projection target for ADMM quantization: the finite symmetric level grid
// { -max*s, ..., -s, 0, s, ..., max*s } with power-of-two step s.
struct QuantConstraint {
  QuantSpec spec;

  explicit QuantConstraint(const QuantSpec& s) : spec(s) { spec.validate(); }

  std::vector<double> grid() const {
    const std::int64_t max = spec.max_weight_level();
    std::vector<double> levels;
    if (spec.signed_weights) {
      levels.reserve(static_cast<std::size_t>(2 * max + 1));
      for (std::int64_t k = -max; k <= max; ++k) {
        levels.push_back(static_cast<double>(k) * spec.weight_step());
      }
    } else {
      for (std::int64_t k = 0; k <= max; ++k) {
        levels.push_back(static_cast<double>(k) * spec.weight_step());
      }
    }
    return levels;
  }
};

// Nearest grid level for a weight; ties round away from zero. Values beyond
// the grid ends clamp to the extreme level.
inline std::int64_t nearest_weight_level(double w, const QuantSpec& q) {
  const std::int64_t max = q.max_weight_level();
  std::int64_t level = std::llround(w / q.weight_step());
  if (level > max) level = max;
  const std::int64_t lo = q.signed_weights ? -max : 0;
  if (level < lo) level = lo;
  return level;
}

inline double weight_level_value(std::int64_t level, const QuantSpec& q) {
  // power-of-two step, so level * step is exact in binary floating point
  return static_cast<double>(level) * q.weight_step();
}

inline Tensor4 quantize_project(const Tensor4& w, const QuantSpec& q) {
  q.validate();
  Tensor4 out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = weight_level_value(nearest_weight_level(w[i], q), q);
  }
  return out;
}

inline Tensor4 quantize_project(const Tensor4& w, const QuantConstraint& c) {
  return quantize_project(w, c.spec);
}

inline bool on_weight_grid(double w, const QuantSpec& q) {
  return w == weight_level_value(nearest_weight_level(w, q), q);
}

inline bool on_weight_grid(const Tensor4& w, const QuantSpec& q) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!on_weight_grid(w[i], q)) return false;
  }
  return true;
}

// Integer levels of an on-grid weight tensor, signed.
inline IntTensor4 weight_levels(const Tensor4& w, const QuantSpec& q) {
  IntTensor4 out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.values[i] = nearest_weight_level(w[i], q);
  }
  return out;
}

// Inputs are clamped to [0, max] and rounded to the unsigned input grid;
// post-ReLU activations between layers are requantized the same way.
inline std::int64_t quantize_input_level(double x, const QuantSpec& q) {
  if (x <= 0.0) return 0;
  std::int64_t level = std::llround(x / q.input_step());
  const std::int64_t max = q.max_input_level();
  if (level > max) level = max;
  return level;
}

inline double input_level_value(std::int64_t level, const QuantSpec& q) {
  return static_cast<double>(level) * q.input_step();
}

inline IntVolume quantize_input(const Volume& v, const QuantSpec& q) {
  IntVolume out(v.channels, v.height, v.width);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    out.values[i] = quantize_input_level(v.values[i], q);
  }
  return out;
}

inline Volume dequantize_input(const IntVolume& v, const QuantSpec& q) {
  Volume out(v.channels, v.height, v.width);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    out.values[i] = input_level_value(v.values[i], q);
  }
  return out;
}

}  // namespace pimforge
