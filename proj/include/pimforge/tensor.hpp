#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pimforge/error.hpp"

namespace pimforge {

enum class LayerKind { Conv, Fc };

// F x C x H x W weight geometry. FC layers are stored with H = W = 1 so the
// projection and mapping code paths are shared with CONV layers.
struct LayerShape {
  std::size_t filters = 1;   // F
  std::size_t channels = 1;  // C
  std::size_t kernel_h = 1;  // H
  std::size_t kernel_w = 1;  // W
  std::size_t stride = 1;
  LayerKind kind = LayerKind::Conv;

  std::size_t kernel_elems() const { return kernel_h * kernel_w; }
  std::size_t kernel_count() const { return filters * channels; }
  std::size_t weight_count() const { return filters * channels * kernel_h * kernel_w; }

  bool operator==(const LayerShape&) const = default;

  void validate() const {
    if (filters < 1 || channels < 1 || kernel_h < 1 || kernel_w < 1) {
      throw InvariantError("layer shape: F, C, H, W must all be >= 1");
    }
    if (stride < 1) {
      throw InvariantError("layer shape: stride must be >= 1");
    }
    if (kind == LayerKind::Fc && (kernel_h != 1 || kernel_w != 1)) {
      throw InvariantError("FC layers are stored with 1x1 kernels");
    }
  }
};

// Dense row-major (f, c, h, w) weight tensor.
class Tensor4 {
 public:
  Tensor4() = default;

  explicit Tensor4(const LayerShape& shape)
      : shape_(shape), values_(shape.weight_count(), 0.0) {}

  Tensor4(const LayerShape& shape, std::vector<double> values)
      : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.weight_count()) {
      throw InvariantError("tensor value count " + std::to_string(values_.size()) +
                           " does not match shape (" + std::to_string(shape_.weight_count()) +
                           " expected)");
    }
  }

  const LayerShape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  std::size_t offset(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
    return ((f * shape_.channels + c) * shape_.kernel_h + h) * shape_.kernel_w + w;
  }

  double& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
    return values_[offset(f, c, h, w)];
  }
  double at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[offset(f, c, h, w)];
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Fixed left-to-right accumulation so results are scheduling-independent.
  double sq_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }

  std::size_t nonzero_count() const {
    std::size_t n = 0;
    for (double v : values_) n += (v != 0.0);
    return n;
  }

  bool operator==(const Tensor4&) const = default;

 private:
  LayerShape shape_;
  std::vector<double> values_;
};

// Activation map, channel-major (c, y, x).
struct Volume {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Volume() = default;
  Volume(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

  std::size_t size() const { return values.size(); }
  std::size_t offset(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * height + y) * width + x;
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[offset(c, y, x)]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[offset(c, y, x)]; }

  bool operator==(const Volume&) const = default;
};

// Integer activation map used on the fixed-point path.
struct IntVolume {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int64_t> values;

  IntVolume() = default;
  IntVolume(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), values(c * h * w, 0) {}

  std::size_t size() const { return values.size(); }
  std::size_t offset(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * height + y) * width + x;
  }
  std::int64_t& at(std::size_t c, std::size_t y, std::size_t x) { return values[offset(c, y, x)]; }
  std::int64_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[offset(c, y, x)];
  }

  bool operator==(const IntVolume&) const = default;
};

// Integer weight tensor (quantization levels), same layout as Tensor4.
struct IntTensor4 {
  LayerShape shape;
  std::vector<std::int64_t> values;

  IntTensor4() = default;
  explicit IntTensor4(const LayerShape& s) : shape(s), values(s.weight_count(), 0) {}

  std::size_t offset(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
    return ((f * shape.channels + c) * shape.kernel_h + h) * shape.kernel_w + w;
  }
  std::int64_t& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
    return values[offset(f, c, h, w)];
  }
  std::int64_t at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
    return values[offset(f, c, h, w)];
  }

  bool operator==(const IntTensor4&) const = default;
};

}  // namespace pimforge
