#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pimforge/error.hpp"
#include "pimforge/rng.hpp"
#include "pimforge/tensor.hpp"

namespace pimforge {

struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 10;
  std::vector<double> pixels;  // n * channels*height*width, sample-major
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_elems() const { return channels * height * width; }

  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * sample_elems(), sample_elems()};
  }

  Volume volume(std::size_t i) const {
    Volume v(channels, height, width);
    const auto img = image(i);
    std::copy(img.begin(), img.end(), v.values.begin());
    return v;
  }

  void validate() const {
    if (labels.empty()) throw InvariantError("dataset is empty");
    if (pixels.size() != labels.size() * sample_elems()) {
      throw InvariantError("dataset pixel count does not match label count");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
        throw InvariantError("dataset label out of range at sample " + std::to_string(i));
      }
    }
  }
};

// A materialized mini-batch.
struct TrainingBatch {
  std::vector<Volume> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline TrainingBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  TrainingBatch batch;
  batch.inputs.reserve(indices.size());
  batch.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    batch.inputs.push_back(data.volume(i));
    batch.labels.push_back(data.labels[i]);
  }
  return batch;
}

namespace detail {

// Seven-segment glyphs on a 7x11 grid, 2 px strokes. Distinct enough that a
// two-CONV network separates them cleanly, noisy enough to be non-trivial.
inline const std::array<std::uint8_t, 10>& segment_table() {
  // bit order: A top, B top-right, C bottom-right, D bottom, E bottom-left,
  // F top-left, G middle
  static const std::array<std::uint8_t, 10> table = {
      0b0111111,  // 0: ABCDEF
      0b0000110,  // 1: BC
      0b1011011,  // 2: ABGED
      0b1001111,  // 3: ABGCD
      0b1100110,  // 4: FGBC
      0b1101101,  // 5: AFGCD
      0b1111101,  // 6: AFGEDC
      0b0000111,  // 7: ABC
      0b1111111,  // 8
      0b1101111,  // 9: ABCDFG
  };
  return table;
}

inline void draw_glyph(int digit, std::size_t row0, std::size_t col0, double intensity,
                       std::size_t height, std::size_t width, std::vector<double>& out) {
  const std::uint8_t segs = segment_table()[static_cast<std::size_t>(digit)];
  auto lit = [&](int seg) { return (segs >> seg) & 1; };
  auto put = [&](std::size_t y, std::size_t x) {
    const std::size_t row = row0 + y;
    const std::size_t col = col0 + x;
    if (row < height && col < width) out[row * width + col] = intensity;
  };
  for (std::size_t x = 1; x <= 5; ++x) {
    if (lit(0)) put(0, x), put(1, x);    // A
    if (lit(6)) put(5, x);               // G
    if (lit(3)) put(9, x), put(10, x);   // D
  }
  for (std::size_t y = 1; y <= 4; ++y) {
    if (lit(5)) put(y, 0), put(y, 1);    // F
    if (lit(1)) put(y, 5), put(y, 6);    // B
  }
  for (std::size_t y = 6; y <= 9; ++y) {
    if (lit(4)) put(y, 0), put(y, 1);    // E
    if (lit(2)) put(y, 5), put(y, 6);    // C
  }
}

}  // namespace detail

// Built-in desk-scale task: 10-class digit glyphs at 16x16, jittered and
// noisy, fully determined by the seed.
inline Dataset make_synthetic_digits(std::size_t count, std::uint64_t seed,
                                     double noise_sigma = 0.08) {
  if (count < 1) throw ConfigError("synthetic dataset needs at least one sample");
  Dataset data;
  data.channels = 1;
  data.height = 16;
  data.width = 16;
  data.num_classes = 10;
  data.pixels.assign(count * 16 * 16, 0.0);
  data.labels.resize(count);
  Rng rng(seed);
  std::vector<double> canvas(16 * 16);
  for (std::size_t i = 0; i < count; ++i) {
    const int digit = static_cast<int>(rng.index(10));
    data.labels[i] = digit;
    std::fill(canvas.begin(), canvas.end(), 0.0);
    const std::size_t row0 = rng.index(5);      // glyph is 11 rows tall
    const std::size_t col0 = 2 + rng.index(6);  // glyph is 7 cols wide
    const double intensity = 0.65 + 0.35 * rng.uniform();
    detail::draw_glyph(digit, row0, col0, intensity, 16, 16, canvas);
    for (std::size_t p = 0; p < canvas.size(); ++p) {
      const double v = canvas[p] + noise_sigma * rng.normal();
      data.pixels[i * canvas.size() + p] = std::clamp(v, 0.0, 1.0);
    }
  }
  return data;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path + ": truncated IDX header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// IDX image/label pair (the MNIST file format). Pixels are scaled to [0, 1].
inline Dataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path.string());
  if (detail::read_be32(imgs, images_path.string()) != 0x00000803) {
    throw ParseError(images_path.string() + ": not an IDX image file");
  }
  const std::uint32_t n = detail::read_be32(imgs, images_path.string());
  const std::uint32_t rows = detail::read_be32(imgs, images_path.string());
  const std::uint32_t cols = detail::read_be32(imgs, images_path.string());

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open " + labels_path.string());
  if (detail::read_be32(labs, labels_path.string()) != 0x00000801) {
    throw ParseError(labels_path.string() + ": not an IDX label file");
  }
  const std::uint32_t n_labels = detail::read_be32(labs, labels_path.string());
  if (n != n_labels) {
    throw ParseError("IDX image/label counts differ (" + std::to_string(n) + " vs " +
                     std::to_string(n_labels) + ")");
  }

  Dataset data;
  data.channels = 1;
  data.height = rows;
  data.width = cols;
  data.pixels.resize(std::size_t{n} * rows * cols);
  data.labels.resize(n);
  std::vector<unsigned char> raw(std::size_t{rows} * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw ParseError(images_path.string() + ": truncated image data");
    }
    for (std::size_t p = 0; p < raw.size(); ++p) {
      data.pixels[std::size_t{i} * raw.size() + p] = raw[p] / 255.0;
    }
    unsigned char label = 0;
    if (!labs.read(reinterpret_cast<char*>(&label), 1)) {
      throw ParseError(labels_path.string() + ": truncated label data");
    }
    data.labels[i] = label;
  }
  int max_label = 0;
  for (int l : data.labels) max_label = std::max(max_label, l);
  data.num_classes = static_cast<std::size_t>(max_label) + 1;
  data.validate();
  return data;
}

}  // namespace pimforge
