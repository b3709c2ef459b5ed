#pragma once

#include <string>
#include <vector>

#include "pimforge/model.hpp"

namespace pimforge {

// Per-layer execution plan: geometry plus activation/pooling switches.
// pooled_* equal out_* when the layer has no pool.
struct NetLayer {
  LayerShape shape;
  bool relu = true;   // activation after the layer
  bool pool = false;  // 2x2 stride-2 max pool after the activation
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pooled_h = 0, pooled_w = 0;
};

struct NetworkDef {
  std::size_t input_channels = 0;
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  std::size_t num_classes = 0;
  std::vector<NetLayer> layers;
};

// Walks the shape chain and fills in geometry; throws with a layer index when
// the chain is inconsistent.
inline void resolve_geometry(NetworkDef& net) {
  std::size_t c = net.input_channels;
  std::size_t h = net.input_h;
  std::size_t w = net.input_w;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    NetLayer& layer = net.layers[i];
    const LayerShape& s = layer.shape;
    const std::string where = "network layer " + std::to_string(i) + ": ";
    if (s.kind == LayerKind::Fc) {
      const std::size_t flat = c * h * w;
      if (s.channels != flat) {
        throw ConfigError(where + "FC input " + std::to_string(s.channels) +
                          " does not match flattened feature size " + std::to_string(flat));
      }
      layer.in_c = flat;
      layer.in_h = 1;
      layer.in_w = 1;
      layer.out_h = layer.out_w = 1;
      layer.pooled_h = layer.pooled_w = 1;
      if (layer.pool) throw ConfigError(where + "FC layers cannot pool");
      c = s.filters;
      h = w = 1;
    } else {
      if (s.channels != c) {
        throw ConfigError(where + "CONV input channels " + std::to_string(s.channels) +
                          " do not match incoming " + std::to_string(c));
      }
      if (h < s.kernel_h || w < s.kernel_w) {
        throw ConfigError(where + "kernel larger than incoming feature map");
      }
      layer.in_c = c;
      layer.in_h = h;
      layer.in_w = w;
      layer.out_h = (h - s.kernel_h) / s.stride + 1;
      layer.out_w = (w - s.kernel_w) / s.stride + 1;
      if (layer.pool && (layer.out_h < 2 || layer.out_w < 2)) {
        throw ConfigError(where + "feature map too small to pool");
      }
      layer.pooled_h = layer.pool ? layer.out_h / 2 : layer.out_h;
      layer.pooled_w = layer.pool ? layer.out_w / 2 : layer.out_w;
      c = s.filters;
      h = layer.pooled_h;
      w = layer.pooled_w;
    }
  }
  if (net.layers.empty()) throw ConfigError("network has no layers");
  if (h != 1 || w != 1) {
    throw ConfigError("network output is not a vector; the last layer must reduce to 1x1");
  }
  if (net.num_classes == 0) net.num_classes = c;
  if (net.num_classes != c) {
    throw ConfigError("final layer produces " + std::to_string(c) + " outputs but " +
                      std::to_string(net.num_classes) + " classes are expected");
  }
}

// House convention: ReLU after every hidden layer, 2x2 max-pool after every
// CONV layer whose output is large enough, softmax cross-entropy on top.
inline NetworkDef make_network(const Model& model, std::size_t input_channels,
                               std::size_t input_h, std::size_t input_w) {
  NetworkDef net;
  net.input_channels = input_channels;
  net.input_h = input_h;
  net.input_w = input_w;
  std::size_t h = input_h;
  std::size_t w = input_w;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    NetLayer layer;
    layer.shape = model.layers[i].weights.shape();
    layer.relu = i + 1 < model.layers.size();
    if (layer.shape.kind == LayerKind::Conv && h >= layer.shape.kernel_h &&
        w >= layer.shape.kernel_w) {
      const std::size_t oh = (h - layer.shape.kernel_h) / layer.shape.stride + 1;
      const std::size_t ow = (w - layer.shape.kernel_w) / layer.shape.stride + 1;
      layer.pool = oh >= 2 && ow >= 2;
      h = layer.pool ? oh / 2 : oh;
      w = layer.pool ? ow / 2 : ow;
    }
    net.layers.push_back(layer);
  }
  resolve_geometry(net);
  return net;
}

}  // namespace pimforge
