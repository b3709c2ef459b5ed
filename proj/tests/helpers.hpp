#pragma once

// Shared fixtures: scratch directories and small model builders.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pimforge/model.hpp"
#include "pimforge/rng.hpp"

namespace testutil {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "pimforge-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline pimforge::LayerShape conv_shape(std::size_t f, std::size_t c, std::size_t h,
                                       std::size_t w, std::size_t stride = 1) {
  pimforge::LayerShape s;
  s.filters = f;
  s.channels = c;
  s.kernel_h = h;
  s.kernel_w = w;
  s.stride = stride;
  s.kind = pimforge::LayerKind::Conv;
  return s;
}

inline pimforge::LayerShape fc_shape(std::size_t f, std::size_t c) {
  pimforge::LayerShape s;
  s.filters = f;
  s.channels = c;
  s.kernel_h = 1;
  s.kernel_w = 1;
  s.kind = pimforge::LayerKind::Fc;
  return s;
}

inline pimforge::Tensor4 random_tensor(const pimforge::LayerShape& shape, pimforge::Rng& rng,
                                       double scale = 1.0) {
  pimforge::Tensor4 t(shape);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline pimforge::LayerParams make_layer(pimforge::Tensor4 weights) {
  pimforge::LayerParams layer;
  layer.biases.assign(weights.shape().filters, 0.0);
  layer.weights = std::move(weights);
  return layer;
}

// Two CONV layers and one FC head on a 16x16 single-channel input, the
// default desk-scale topology.
inline pimforge::Model make_desk_model(pimforge::Rng& rng, std::size_t conv1 = 8,
                                       std::size_t conv2 = 16, std::size_t classes = 10) {
  pimforge::Model model;
  model.num_conv_layers = 2;
  model.layers.push_back(make_layer(random_tensor(conv_shape(conv1, 1, 3, 3), rng, 0.3)));
  model.layers.push_back(make_layer(random_tensor(conv_shape(conv2, conv1, 3, 3), rng, 0.2)));
  // 16x16 -> conv 14x14 -> pool 7x7 -> conv 5x5 -> pool 2x2
  model.layers.push_back(make_layer(random_tensor(fc_shape(classes, conv2 * 4), rng, 0.2)));
  model.validate();
  return model;
}

}  // namespace testutil
