#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pimforge/json_io.hpp"
#include "pimforge/model.hpp"

namespace pimforge {

inline constexpr const char* kModelFormat = "pimforge-model/1";

inline Json quant_to_json(const QuantSpec& q) {
  Json j;
  j["weight_bits"] = q.weight_bits;
  j["input_bits"] = q.input_bits;
  j["frac_bits"] = q.frac_bits;
  j["input_frac_bits"] = q.input_frac_bits;
  j["signed"] = q.signed_weights;
  return j;
}

inline QuantSpec quant_from_json(const Json& j, const std::string& context) {
  QuantSpec q;
  q.weight_bits = require_field(j, "weight_bits", context).get<unsigned>();
  q.input_bits = require_field(j, "input_bits", context).get<unsigned>();
  q.frac_bits = require_field(j, "frac_bits", context).get<unsigned>();
  q.input_frac_bits = require_field(j, "input_frac_bits", context).get<unsigned>();
  q.signed_weights = require_field(j, "signed", context).get<bool>();
  return q;
}

inline Json model_to_json(const Model& model) {
  Json doc;
  doc["format"] = kModelFormat;
  if (model.seed) doc["seed"] = *model.seed;
  doc["num_conv_layers"] = model.num_conv_layers;
  Json layers = Json::array();
  for (const LayerParams& layer : model.layers) {
    const LayerShape& s = layer.weights.shape();
    Json jl;
    jl["kind"] = s.kind == LayerKind::Conv ? "conv" : "fc";
    jl["filters"] = s.filters;
    jl["channels"] = s.channels;
    jl["kernel_h"] = s.kernel_h;
    jl["kernel_w"] = s.kernel_w;
    jl["stride"] = s.stride;
    jl["quant"] = layer.quant ? quant_to_json(*layer.quant) : Json(nullptr);
    // row-major F, C, H, W; doubles serialize with round-trip exactness
    jl["weights"] = Json(std::vector<double>(layer.weights.values().begin(),
                                             layer.weights.values().end()));
    jl["biases"] = Json(layer.biases);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  return doc;
}

inline Model model_from_json(const Json& doc) {
  require_format(doc, kModelFormat, "model");
  Model model;
  if (doc.contains("seed") && !doc["seed"].is_null()) {
    model.seed = doc["seed"].get<std::int64_t>();
  }
  model.num_conv_layers = require_field(doc, "num_conv_layers", "model").get<std::size_t>();
  const Json& layers = require_field(doc, "layers", "model");
  if (!layers.is_array()) throw ParseError("model: \"layers\" must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string ctx = "model layer " + std::to_string(i);
    const Json& jl = layers[i];
    LayerShape shape;
    const std::string kind = require_field(jl, "kind", ctx).get<std::string>();
    if (kind == "conv") {
      shape.kind = LayerKind::Conv;
    } else if (kind == "fc") {
      shape.kind = LayerKind::Fc;
    } else {
      throw ParseError(ctx + ": unknown layer kind \"" + kind + "\"");
    }
    shape.filters = require_field(jl, "filters", ctx).get<std::size_t>();
    shape.channels = require_field(jl, "channels", ctx).get<std::size_t>();
    shape.kernel_h = require_field(jl, "kernel_h", ctx).get<std::size_t>();
    shape.kernel_w = require_field(jl, "kernel_w", ctx).get<std::size_t>();
    shape.stride = require_field(jl, "stride", ctx).get<std::size_t>();

    const Json& jw = require_field(jl, "weights", ctx);
    if (!jw.is_array()) throw ParseError(ctx + ": \"weights\" must be an array");
    std::vector<double> values;
    values.reserve(jw.size());
    for (const Json& v : jw) {
      if (!v.is_number()) throw ParseError(ctx + ": non-numeric weight");
      values.push_back(v.get<double>());
    }
    if (values.size() != shape.weight_count()) {
      throw InvariantError(ctx + ": weight count " + std::to_string(values.size()) +
                           " does not match shape (" + std::to_string(shape.weight_count()) +
                           " expected)");
    }
    LayerParams layer;
    layer.weights = Tensor4(shape, std::move(values));
    const Json& jb = require_field(jl, "biases", ctx);
    if (!jb.is_array()) throw ParseError(ctx + ": \"biases\" must be an array");
    for (const Json& v : jb) {
      if (!v.is_number()) throw ParseError(ctx + ": non-numeric bias");
      layer.biases.push_back(v.get<double>());
    }
    const Json& jq = require_field(jl, "quant", ctx);
    if (!jq.is_null()) layer.quant = quant_from_json(jq, ctx);
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

inline Model load_model(const std::filesystem::path& path) {
  return model_from_json(load_json_file(path));
}

// Weights are stored losslessly: the JSON writer emits the shortest decimal
// form that parses back to the identical double.
inline void save_model(const Model& model, const std::filesystem::path& path) {
  model.validate();
  save_json_atomic(model_to_json(model), path);
}

}  // namespace pimforge
