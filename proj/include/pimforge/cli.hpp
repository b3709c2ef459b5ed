#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pimforge/admm.hpp"
#include "pimforge/artifact_io.hpp"
#include "pimforge/cost.hpp"
#include "pimforge/dataset.hpp"
#include "pimforge/inference.hpp"
#include "pimforge/model_io.hpp"
#include "pimforge/pim.hpp"
#include "pimforge/reference.hpp"

namespace pimforge::cli {

struct Context {
  std::int64_t seed = 0;
  unsigned threads = 0;  // 0 = all cores
  bool log_json = false;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

namespace detail {

inline std::uint64_t derive_seed(std::int64_t seed, std::uint64_t stream) {
  Rng rng(static_cast<std::uint64_t>(seed));
  return rng.fork(stream).next_u64();
}

inline void emit(const Context& ctx, const Json& event, const std::string& human) {
  if (ctx.log_json) {
    *ctx.out << event.dump() << '\n';
  } else {
    *ctx.out << human << '\n';
  }
}

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// dataset config: {"kind":"synthetic","train":N,"test":N,"noise":s} or
// {"kind":"idx","train_images":...,"train_labels":...,"test_images":...,"test_labels":...}
inline DatasetPair load_datasets(const Json& cfg, std::int64_t seed) {
  const std::string kind = require_field(cfg, "kind", "dataset").get<std::string>();
  DatasetPair pair;
  if (kind == "synthetic") {
    const std::size_t train_n = cfg.value("train", std::size_t{2000});
    const std::size_t test_n = cfg.value("test", std::size_t{500});
    const double noise = cfg.value("noise", 0.08);
    pair.train = make_synthetic_digits(train_n, derive_seed(seed, 1), noise);
    pair.test = make_synthetic_digits(test_n, derive_seed(seed, 2), noise);
  } else if (kind == "idx") {
    pair.train = load_idx_dataset(require_field(cfg, "train_images", "dataset").get<std::string>(),
                                  require_field(cfg, "train_labels", "dataset").get<std::string>());
    pair.test = load_idx_dataset(require_field(cfg, "test_images", "dataset").get<std::string>(),
                                 require_field(cfg, "test_labels", "dataset").get<std::string>());
  } else {
    throw ConfigError("dataset kind must be \"synthetic\" or \"idx\"");
  }
  pair.train.validate();
  pair.test.validate();
  return pair;
}

inline GroupKind parse_kind(const std::string& kind) {
  if (kind == "filter") return GroupKind::Filter;
  if (kind == "channel") return GroupKind::Channel;
  if (kind == "kernel") return GroupKind::Kernel;
  throw ConfigError("constraint kind must be filter, channel or kernel, got \"" + kind + "\"");
}

// {"layer":i,"kind":k,"budget":n} or {"layer":i,"kind":k,"keep_ratio":r}
inline std::vector<LayerConstraint> parse_constraints(const Json& cfg, const Model& model) {
  std::vector<LayerConstraint> out;
  if (!cfg.is_array()) throw ConfigError("\"constraints\" must be an array");
  for (const Json& jc : cfg) {
    const std::size_t layer = require_field(jc, "layer", "constraint").get<std::size_t>();
    if (layer >= model.num_layers()) {
      throw ConfigError("constraint layer " + std::to_string(layer) + " out of range (model has " +
                        std::to_string(model.num_layers()) + " layers)");
    }
    const GroupKind kind = parse_kind(require_field(jc, "kind", "constraint").get<std::string>());
    const std::size_t groups = group_count(model.layers[layer].weights.shape(), kind);
    std::size_t budget = 0;
    if (jc.contains("budget")) {
      budget = jc["budget"].get<std::size_t>();
    } else if (jc.contains("keep_ratio")) {
      const double ratio = jc["keep_ratio"].get<double>();
      if (ratio <= 0.0 || ratio > 1.0) throw ConfigError("keep_ratio must be in (0, 1]");
      budget = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(groups)));
    } else {
      throw ConfigError("constraint needs \"budget\" or \"keep_ratio\"");
    }
    const SparsityConstraint constraint(kind, budget);
    try {
      constraint.validate_for(model.layers[layer].weights.shape());
    } catch (const Error& e) {
      throw ConfigError("layer " + std::to_string(layer) + ": " + std::string(e.what()));
    }
    out.push_back({layer, constraint});
  }
  return out;
}

inline QuantSpec parse_quant(const Json& jq) {
  QuantSpec q;
  q.weight_bits = jq.value("weight_bits", 8u);
  q.input_bits = jq.value("input_bits", 8u);
  q.frac_bits = jq.value("frac_bits", q.weight_bits - 2);
  q.input_frac_bits = jq.value("input_frac_bits", q.input_bits - 2);
  q.signed_weights = jq.value("signed", true);
  q.validate();
  return q;
}

// model construction for configs without a pretrained model_in
inline Model init_model(const Json& jinit, std::int64_t seed) {
  Model model;
  const Json& layers = require_field(jinit, "layers", "init");
  std::size_t conv_count = 0;
  bool fc_seen = false;
  for (const Json& jl : layers) {
    LayerShape shape;
    const std::string kind = require_field(jl, "kind", "init layer").get<std::string>();
    if (kind == "conv") {
      shape.kind = LayerKind::Conv;
      if (fc_seen) throw ConfigError("init: CONV layers must precede FC layers");
      ++conv_count;
    } else if (kind == "fc") {
      shape.kind = LayerKind::Fc;
      fc_seen = true;
    } else {
      throw ConfigError("init layer kind must be conv or fc");
    }
    shape.filters = require_field(jl, "filters", "init layer").get<std::size_t>();
    shape.channels = require_field(jl, "channels", "init layer").get<std::size_t>();
    shape.kernel_h = jl.value("kernel_h", std::size_t{1});
    shape.kernel_w = jl.value("kernel_w", std::size_t{1});
    shape.stride = jl.value("stride", std::size_t{1});
    shape.validate();
    LayerParams layer;
    layer.weights = Tensor4(shape);
    layer.biases.assign(shape.filters, 0.0);
    model.layers.push_back(std::move(layer));
  }
  model.num_conv_layers = conv_count;
  Rng rng(derive_seed(seed, 3));
  randomize_weights(model, rng);
  model.validate();
  return model;
}

inline AdmmSchedule parse_schedule(const Json& cfg, std::int64_t seed) {
  AdmmSchedule sched;
  sched.admm_rounds = cfg.value("admm_rounds", std::size_t{10});
  sched.sgd_steps_per_round = cfg.value("sgd_steps_per_round", std::size_t{0});
  sched.rho_initial = cfg.value("rho_initial", 1e-3);
  sched.rho_growth = cfg.value("rho_growth", 1.5);
  sched.learning_rate = cfg.value("learning_rate", 0.05);
  sched.lr_decay = cfg.value("lr_decay", 1.0);
  sched.seed = static_cast<std::uint64_t>(seed);
  return sched;
}

inline std::string format_ratio(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v << "x";
  return os.str();
}

inline void print_sparsity(const Context& ctx, const SparsityReport& report) {
  if (ctx.log_json) {
    Json j;
    j["event"] = "sparsity_report";
    j["conv_compression_rate"] = report.conv_compression_rate;
    Json layers = Json::array();
    for (const LayerSparsity& ls : report.layers) {
      layers.push_back({{"nonzero_filters", ls.nonzero_filters},
                        {"nonzero_channels", ls.nonzero_channels},
                        {"nonzero_kernels", ls.nonzero_kernels},
                        {"nonzero_weights", ls.nonzero_weights},
                        {"total_weights", ls.total_weights}});
    }
    j["layers"] = std::move(layers);
    *ctx.out << j.dump() << '\n';
    return;
  }
  *ctx.out << "layer  nz-filters  nz-channels  nz-kernels  nz-weights/total\n";
  for (std::size_t i = 0; i < report.layers.size(); ++i) {
    const LayerSparsity& ls = report.layers[i];
    *ctx.out << std::setw(5) << i << "  " << std::setw(10) << ls.nonzero_filters << "  "
             << std::setw(11) << ls.nonzero_channels << "  " << std::setw(10)
             << ls.nonzero_kernels << "  " << ls.nonzero_weights << "/" << ls.total_weights
             << '\n';
  }
  *ctx.out << "CONV compression rate: " << format_ratio(report.conv_compression_rate) << '\n';
}

}  // namespace detail

// compress: ADMM pruning + quantization -> compressed model artifact.
inline int cmd_compress(const Json& cfg, const Context& ctx) {
  const detail::DatasetPair data = detail::load_datasets(
      require_field(cfg, "dataset", "compress config"), ctx.seed);

  Model model;
  if (cfg.contains("model_in") && !cfg["model_in"].is_null()) {
    model = load_model(cfg["model_in"].get<std::string>());
  } else if (cfg.contains("init")) {
    model = detail::init_model(cfg["init"], ctx.seed);
  } else {
    throw ConfigError("compress config needs \"model_in\" or \"init\"");
  }

  CompressSettings settings;
  if (cfg.contains("constraints")) {
    settings.constraints = detail::parse_constraints(cfg["constraints"], model);
  }
  if (cfg.contains("quant") && !cfg["quant"].is_null()) {
    settings.quant = detail::parse_quant(cfg["quant"]);
  }
  const Json sched_cfg = cfg.value("schedule", Json::object());
  settings.schedule = detail::parse_schedule(sched_cfg, ctx.seed);

  const NetworkDef net = make_network(model, data.train.channels, data.train.height,
                                      data.train.width);
  if (net.num_classes != data.train.num_classes) {
    throw ConfigError("model produces " + std::to_string(net.num_classes) +
                      " classes but the dataset has " + std::to_string(data.train.num_classes));
  }
  const std::size_t batch_size = sched_cfg.value("batch_size", std::size_t{32});
  CnnProblem problem(data.train, net, batch_size);
  if (settings.schedule.sgd_steps_per_round == 0) {
    settings.schedule.sgd_steps_per_round = problem.steps_per_epoch();
  }
  const std::size_t retrain_passes = sched_cfg.value("retrain_passes", std::size_t{5});
  settings.retrain_steps = retrain_passes * problem.steps_per_epoch();

  std::ofstream log_file;
  if (cfg.contains("log_out")) {
    log_file.open(cfg["log_out"].get<std::string>(), std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + cfg["log_out"].get<std::string>());
  }

  const auto on_round = [&](const RoundLog& log, const Model& current) {
    const double accuracy = evaluate(current, net, data.test, ctx.threads);
    Json event;
    event["event"] = "round";
    event["round"] = log.round;
    event["loss"] = log.mean_loss;
    event["accuracy"] = accuracy;
    event["learning_rate"] = log.learning_rate;
    event["rho"] = log.rho;
    event["residuals"] = log.residuals;
    std::ostringstream human;
    human << "round " << (log.round + 1) << "/" << settings.schedule.admm_rounds << "  loss "
          << std::fixed << std::setprecision(4) << log.mean_loss << "  acc "
          << std::setprecision(3) << accuracy << "  lr " << std::setprecision(4)
          << log.learning_rate << "  rho " << log.rho << "  residuals [";
    for (std::size_t i = 0; i < log.residuals.size(); ++i) {
      human << (i ? ", " : "") << std::setprecision(4) << log.residuals[i];
    }
    human << "]";
    detail::emit(ctx, event, human.str());
    if (log_file) log_file << event.dump() << '\n';
  };

  CompressResult result = compress(std::move(model), problem, settings, on_round);

  // pick per-layer activation scales unless the config pinned them
  const bool explicit_input_frac =
      cfg.contains("quant") && !cfg["quant"].is_null() && cfg["quant"].contains("input_frac_bits");
  if (settings.quant && !explicit_input_frac) {
    calibrate_input_scales(result.model, net, data.train);
  }

  result.model.seed = ctx.seed;
  const std::string model_out = require_field(cfg, "model_out", "compress config").get<std::string>();
  save_model(result.model, model_out);

  const double final_accuracy = evaluate(result.model, net, data.test, ctx.threads);
  detail::print_sparsity(ctx, result.report);
  Json done;
  done["event"] = "done";
  done["model_out"] = model_out;
  done["conv_compression_rate"] = result.report.conv_compression_rate;
  done["test_accuracy"] = final_accuracy;
  std::ostringstream human;
  human << "wrote " << model_out << "  compression "
        << detail::format_ratio(result.report.conv_compression_rate) << "  test accuracy "
        << std::fixed << std::setprecision(4) << final_accuracy;
  detail::emit(ctx, done, human.str());
  if (log_file) log_file << done.dump() << '\n';
  return 0;
}

// map: compressed model -> PE/sub-array layout artifact.
inline int cmd_map(const Json& cfg, const Context& ctx) {
  Model model = load_model(require_field(cfg, "model", "map config").get<std::string>());
  if (cfg.value("propagate", false)) {
    // cross-layer removal of structures made redundant by pruning; function-preserving
    model = propagate_pruning(std::move(model));
  }
  const std::string mode_name = cfg.value("mode", std::string("physical"));
  RemovalMode mode;
  if (mode_name == "physical") {
    mode = RemovalMode::Physical;
  } else if (mode_name == "lut") {
    mode = RemovalMode::Lut;
  } else {
    throw ConfigError("map mode must be \"physical\" or \"lut\"");
  }
  PimLayout layout = build_layout(model, mode);
  layout.seed = ctx.seed;
  const std::string layout_out = require_field(cfg, "layout_out", "map config").get<std::string>();
  save_json_atomic(layout_to_json(layout), layout_out);

  const LayoutStats stats = layout_stats(layout);
  Json event;
  event["event"] = "mapped";
  event["layout_out"] = layout_out;
  event["mode"] = mode_name;
  event["pes"] = stats.total.pes;
  event["weight_subarrays"] = stats.total.weight_subarrays;
  event["effective_pes"] = stats.total.effective_pes;
  event["effective_weight_subarrays"] = stats.total.effective_weight_subarrays;
  std::ostringstream human;
  human << "wrote " << layout_out << "  mode " << mode_name << "  PEs " << stats.total.pes
        << " (effective " << stats.total.effective_pes << ")  weight sub-arrays "
        << stats.total.weight_subarrays << " (effective "
        << stats.total.effective_weight_subarrays << ")";
  detail::emit(ctx, event, human.str());
  return 0;
}

// simulate: run inference on the layout, verify against the reference
// quantized forward pass, and write the per-inference trace.
inline int cmd_simulate(const Json& cfg, const Context& ctx) {
  const Model model = load_model(require_field(cfg, "model", "simulate config").get<std::string>());
  const PimLayout layout =
      layout_from_json(load_json_file(require_field(cfg, "layout", "simulate config").get<std::string>()));
  if (layout.layers.size() != model.num_layers()) {
    throw ConfigError("layout does not match the model (layer counts differ)");
  }
  const detail::DatasetPair data = detail::load_datasets(
      require_field(cfg, "dataset", "simulate config"), ctx.seed);
  const std::size_t samples =
      std::min(cfg.value("samples", std::size_t{100}), data.test.size());
  const NetworkDef net =
      make_network(model, data.test.channels, data.test.height, data.test.width);

  // one trace per inference; op counts are input-independent by construction
  SimTrace trace;
  {
    const ConvBackend backend = pim_backend(layout, &trace);
    quantized_forward(model, net, data.test.volume(0), backend);
  }
  for (const LayerTrace& lt : trace.layers) {
    if (lt.active_pes == 0) {
      *ctx.err << "warning: layer " << lt.layer << " is fully pruned; it contributes nothing\n";
    }
  }

  const ConvBackend pim = pim_backend(layout);
  const ConvBackend ref = reference_backend(model);
  const ConvBackend bits = bitserial_backend(model);
  std::vector<std::uint8_t> match(samples, 0);
  std::vector<std::uint8_t> correct(samples, 0);
  parallel_for(samples, ctx.threads, [&](std::size_t i) {
    const Volume image = data.test.volume(i);
    const std::vector<double> pim_logits = quantized_forward(model, net, image, pim);
    const std::vector<double> ref_logits = quantized_forward(model, net, image, ref);
    const std::vector<double> bit_logits = quantized_forward(model, net, image, bits);
    match[i] = (pim_logits == ref_logits && pim_logits == bit_logits) ? 1 : 0;  // bit-exact
    correct[i] = argmax_label(pim_logits) == data.test.labels[i] ? 1 : 0;
  });
  std::size_t matched = 0, hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    matched += match[i];
    hits += correct[i];
  }
  if (matched != samples) {
    throw Error("PIM simulation diverged from the reference quantized forward pass on " +
                std::to_string(samples - matched) + " of " + std::to_string(samples) +
                " samples");
  }
  const double accuracy = static_cast<double>(hits) / static_cast<double>(samples);

  const std::string trace_out = require_field(cfg, "trace_out", "simulate config").get<std::string>();
  save_json_atomic(trace_to_json(trace, ctx.seed, samples), trace_out);

  Json event;
  event["event"] = "simulated";
  event["trace_out"] = trace_out;
  event["samples"] = samples;
  event["bit_exact_matches"] = matched;
  event["accuracy"] = accuracy;
  std::ostringstream human;
  human << "wrote " << trace_out << "  verified " << matched << "/" << samples
        << " samples bit-exact  accuracy " << std::fixed << std::setprecision(4) << accuracy;
  detail::emit(ctx, event, human.str());
  return 0;
}

// report: layout + trace + cost parameters -> cost report artifact.
inline int cmd_report(const Json& cfg, const Context& ctx) {
  const PimLayout layout =
      layout_from_json(load_json_file(require_field(cfg, "layout", "report config").get<std::string>()));
  const SimTrace trace =
      trace_from_json(load_json_file(require_field(cfg, "trace", "report config").get<std::string>()));

  CostParams params;
  if (cfg.contains("cost_params") && !cfg["cost_params"].is_null()) {
    params = cost_params_from_json(load_json_file(cfg["cost_params"].get<std::string>()));
  } else if (const char* dir = std::getenv("PIMFORGE_CONFIG_DIR")) {
    const std::filesystem::path candidate = std::filesystem::path(dir) / "cost_params.json";
    if (std::filesystem::exists(candidate)) {
      params = cost_params_from_json(load_json_file(candidate));
    }
  }

  const CostReport report = estimate(layout, trace, params);
  std::optional<CostComparison> cmp;
  if (cfg.contains("baseline") && !cfg["baseline"].is_null()) {
    const CostReport baseline =
        report_from_json(load_json_file(cfg["baseline"].get<std::string>()));
    cmp = compare(report, baseline);
  }

  const std::string report_out = require_field(cfg, "report_out", "report config").get<std::string>();
  save_json_atomic(report_to_json(report, ctx.seed, cmp), report_out);

  if (cfg.contains("csv_out")) {
    std::ofstream csv(cfg["csv_out"].get<std::string>(), std::ios::trunc);
    csv << "layer,area_um2,dynamic_energy_pj,cycles\n";
    for (const LayerCost& lc : report.layers) {
      csv << lc.layer << "," << lc.area_um2 << "," << lc.dynamic_energy_pj << "," << lc.cycles
          << "\n";
    }
  }

  Json event;
  event["event"] = "reported";
  event["report_out"] = report_out;
  event["area_um2"] = report.area_um2;
  event["energy_per_inference_pj"] = report.energy_per_inference_pj;
  event["average_power_uw"] = report.average_power_uw;
  event["throughput_inferences_per_s"] = report.throughput_inferences_per_s;
  if (cmp) {
    event["area_reduction"] = cmp->area_reduction;
    event["power_reduction"] = cmp->power_reduction;
    event["throughput_gain"] = cmp->throughput_gain;
  }
  if (ctx.log_json) {
    *ctx.out << event.dump() << '\n';
  } else {
    std::ostream& os = *ctx.out;
    os << std::fixed;
    os << "area                " << std::setprecision(1) << report.area_um2 << " um^2\n";
    os << "energy / inference  " << std::setprecision(1) << report.energy_per_inference_pj
       << " pJ\n";
    os << "average power       " << std::setprecision(2) << report.average_power_uw << " uW\n";
    os << "throughput          " << std::setprecision(1) << report.throughput_inferences_per_s
       << " inf/s\n";
    os << "PEs                 " << report.pes << "\n";
    if (cmp) {
      os << "vs baseline: area reduction " << detail::format_ratio(cmp->area_reduction)
         << ", power reduction " << detail::format_ratio(cmp->power_reduction)
         << ", throughput gain " << detail::format_ratio(cmp->throughput_gain) << "\n";
    }
    os << "wrote " << report_out << "\n";
  }
  return 0;
}

// verify: on-demand oracle equivalence suites.
inline int cmd_verify(const Context& ctx) {
  Rng rng(detail::derive_seed(ctx.seed, 9));
  bool all_ok = true;
  const auto outcome = [&](const std::string& name, bool ok, const std::string& info) {
    all_ok = all_ok && ok;
    Json event;
    event["event"] = "verify";
    event["suite"] = name;
    event["ok"] = ok;
    event["info"] = info;
    detail::emit(ctx, event, std::string(ok ? "[pass] " : "[FAIL] ") + name + "  " + info);
  };

  {  // bit-serial engine vs plain integer convolution
    std::size_t checked = 0;
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
      const unsigned bits_in = 1 + static_cast<unsigned>(rng.index(8));
      const unsigned bits_w = 1 + static_cast<unsigned>(rng.index(8));
      const LayerShape shape{1 + rng.index(4), 1 + rng.index(3), 1 + rng.index(3),
                             1 + rng.index(3), 1, LayerKind::Conv};
      IntVolume input(shape.channels, shape.kernel_h + rng.index(5), shape.kernel_w + rng.index(5));
      for (auto& v : input.values) {
        v = static_cast<std::int64_t>(rng.index((std::size_t{1} << bits_in)));
      }
      IntTensor4 weights(shape);
      for (auto& v : weights.values) {
        v = static_cast<std::int64_t>(rng.index((std::size_t{1} << bits_w)));
        if (rng.uniform() < 0.5) v = -v;
      }
      ok = bitwise_conv2d(input, weights, 1, bits_in, bits_w, true) ==
           reference::int_conv2d(input, weights, 1);
      ++checked;
    }
    outcome("bitserial-vs-integer-conv", ok, std::to_string(checked) + " random instances");
  }

  {  // projection optimality against enumeration
    std::size_t checked = 0;
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const LayerShape shape{1 + rng.index(6), 1 + rng.index(6), 1 + rng.index(2),
                             1 + rng.index(2), 1, LayerKind::Conv};
      Tensor4 w(shape);
      for (double& v : w.values()) v = rng.normal();
      for (GroupKind kind : {GroupKind::Filter, GroupKind::Channel, GroupKind::Kernel}) {
        const std::size_t groups = group_count(shape, kind);
        const SparsityConstraint c(kind, 1 + rng.index(groups));
        const Tensor4 p = project(w, c);
        ok = ok && is_feasible(p, c) && reference::exchange_optimal(w, p, c);
        if (reference::enumerable_supports(groups, c.budget, 100000)) {
          double dist = 0.0;
          for (std::size_t i = 0; i < w.size(); ++i) {
            dist += (w[i] - p[i]) * (w[i] - p[i]);
          }
          ok = ok && dist <= reference::brute_force_min_sq_distance(w, c) + 1e-9;
          ++checked;
        }
      }
    }
    outcome("projection-vs-enumeration", ok, std::to_string(checked) + " enumerated instances");
  }

  {  // decompose/recompose identity
    bool ok = true;
    for (unsigned bits = 1; bits <= 8 && ok; ++bits) {
      const std::int64_t max = (std::int64_t{1} << bits) - 1;
      std::vector<std::int64_t> all;
      for (std::int64_t v = -max; v <= max; ++v) all.push_back(v);
      ok = BitPlanes::decompose(all, bits, true).recompose() == all;
    }
    outcome("bitplane-roundtrip", ok, "exhaustive at 1..8 bits");
  }

  {  // analytic vs finite-difference gradients on a small random net
    // 1x5x5 -> conv 2@2x2 -> pool -> 2x2x2 flattened -> fc 3
    Model m;
    m.num_conv_layers = 1;
    Tensor4 w1(LayerShape{2, 1, 2, 2, 1, LayerKind::Conv});
    for (double& v : w1.values()) v = 0.5 * rng.normal();
    Tensor4 w2(LayerShape{3, 2 * 2 * 2, 1, 1, 1, LayerKind::Fc});
    for (double& v : w2.values()) v = 0.5 * rng.normal();
    m.layers.push_back({std::move(w1), {0.1, -0.1}, std::nullopt});
    m.layers.push_back({std::move(w2), {0.0, 0.0, 0.0}, std::nullopt});
    const NetworkDef net = make_network(m, 1, 5, 5);
    TrainingBatch batch;
    Volume x(1, 5, 5);
    for (double& v : x.values) v = rng.uniform();
    batch.inputs.push_back(x);
    batch.labels.push_back(1);
    Gradients grads;
    batch_loss_and_gradients(m, net, batch, grads);
    bool ok = true;
    for (std::size_t li = 0; li < m.layers.size() && ok; ++li) {
      for (std::size_t k = 0; k < m.layers[li].weights.size() && ok; ++k) {
        Model probe = m;
        const double eps = 1e-5;
        probe.layers[li].weights[k] += eps;
        Gradients scratch;
        const double hi = batch_loss_and_gradients(probe, net, batch, scratch);
        probe.layers[li].weights[k] -= 2 * eps;
        const double lo = batch_loss_and_gradients(probe, net, batch, scratch);
        const double numeric = (hi - lo) / (2 * eps);
        const double analytic = grads.weights[li][k];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
        ok = std::abs(numeric - analytic) / denom < 1e-4;
      }
    }
    outcome("gradients-vs-finite-differences", ok, "2-layer random network");
  }

  return all_ok ? 0 : 1;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"pimforge: ADMM compression and SOT-MRAM PIM simulation toolkit"};
  app.fallthrough();

  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  app.add_option("--seed", ctx.seed, "seed for all randomness, recorded in artifacts");
  app.add_option("--threads", ctx.threads, "worker thread cap (0 = all cores)");
  app.add_flag("--log-json", ctx.log_json, "line-oriented JSON logs");

  std::string config_path;
  CLI::App* compress = app.add_subcommand("compress", "train + prune + quantize a model");
  compress->add_option("--config", config_path, "job config JSON")->required();
  CLI::App* map = app.add_subcommand("map", "build the PE/sub-array layout");
  map->add_option("--config", config_path, "job config JSON")->required();
  CLI::App* simulate = app.add_subcommand("simulate", "run and verify PIM inference");
  simulate->add_option("--config", config_path, "job config JSON")->required();
  CLI::App* report = app.add_subcommand("report", "estimate area/power/throughput");
  report->add_option("--config", config_path, "job config JSON")->required();
  CLI::App* verify = app.add_subcommand("verify", "run the oracle equivalence suites");

  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help;
    const int code = app.exit(e, help, help);
    (code == 0 ? out : err) << help.str();
    return code;
  }

  const auto resolve_config = [&]() -> Json {
    std::filesystem::path path = config_path;
    if (!std::filesystem::exists(path)) {
      if (const char* dir = std::getenv("PIMFORGE_CONFIG_DIR")) {
        const std::filesystem::path fallback = std::filesystem::path(dir) / config_path;
        if (std::filesystem::exists(fallback)) path = fallback;
      }
    }
    return load_json_file(path);
  };

  try {
    if (compress->parsed()) return cmd_compress(resolve_config(), ctx);
    if (map->parsed()) return cmd_map(resolve_config(), ctx);
    if (simulate->parsed()) return cmd_simulate(resolve_config(), ctx);
    if (report->parsed()) return cmd_report(resolve_config(), ctx);
    if (verify->parsed()) return cmd_verify(ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.push_back("pimforge");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pimforge::cli
