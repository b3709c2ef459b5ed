#pragma once

#include <optional>
#include <string>

#include "pimforge/cost.hpp"
#include "pimforge/json_io.hpp"
#include "pimforge/model_io.hpp"
#include "pimforge/pim.hpp"

namespace pimforge {

inline constexpr const char* kLayoutFormat = "pimforge-layout/1";
inline constexpr const char* kTraceFormat = "pimforge-trace/1";
inline constexpr const char* kReportFormat = "pimforge-report/1";

inline Json layout_to_json(const PimLayout& layout) {
  Json doc;
  doc["format"] = kLayoutFormat;
  if (layout.seed) doc["seed"] = *layout.seed;
  doc["mode"] = removal_mode_name(layout.mode);
  Json layers = Json::array();
  for (const PimLayerLayout& pll : layout.layers) {
    Json jl;
    jl["kind"] = pll.shape.kind == LayerKind::Conv ? "conv" : "fc";
    jl["filters"] = pll.shape.filters;
    jl["channels"] = pll.shape.channels;
    jl["kernel_h"] = pll.shape.kernel_h;
    jl["kernel_w"] = pll.shape.kernel_w;
    jl["stride"] = pll.shape.stride;
    jl["quant"] = quant_to_json(pll.quant);
    Json pes = Json::array();
    for (const ProcessingElement& pe : pll.pes) {
      Json jpe;
      jpe["channel"] = pe.channel;
      jpe["input_rows"] = pe.input_rows;
      jpe["input_cols"] = pe.input_cols;
      jpe["pruned"] = pe.pruned;
      jpe["skip_lut"] = Json(pe.skip_lut);
      Json arrays = Json::array();
      for (const SubArray& sa : pe.weight_subarrays) {
        Json ja;
        ja["filter"] = sa.filter;
        ja["rows"] = sa.rows;
        ja["cols"] = sa.cols;
        ja["pruned"] = sa.pruned;
        ja["kernel_levels"] = Json(sa.kernel_levels);
        arrays.push_back(std::move(ja));
      }
      jpe["weight_subarrays"] = std::move(arrays);
      pes.push_back(std::move(jpe));
    }
    jl["pes"] = std::move(pes);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  return doc;
}

inline PimLayout layout_from_json(const Json& doc) {
  require_format(doc, kLayoutFormat, "layout");
  PimLayout layout;
  if (doc.contains("seed") && !doc["seed"].is_null()) {
    layout.seed = doc["seed"].get<std::int64_t>();
  }
  const std::string mode = require_field(doc, "mode", "layout").get<std::string>();
  if (mode == "physical") {
    layout.mode = RemovalMode::Physical;
  } else if (mode == "lut") {
    layout.mode = RemovalMode::Lut;
  } else {
    throw ParseError("layout: unknown mode \"" + mode + "\"");
  }
  for (const Json& jl : require_field(doc, "layers", "layout")) {
    PimLayerLayout pll;
    const std::string kind = require_field(jl, "kind", "layout layer").get<std::string>();
    pll.shape.kind = kind == "conv" ? LayerKind::Conv : LayerKind::Fc;
    pll.shape.filters = jl["filters"].get<std::size_t>();
    pll.shape.channels = jl["channels"].get<std::size_t>();
    pll.shape.kernel_h = jl["kernel_h"].get<std::size_t>();
    pll.shape.kernel_w = jl["kernel_w"].get<std::size_t>();
    pll.shape.stride = jl["stride"].get<std::size_t>();
    pll.quant = quant_from_json(require_field(jl, "quant", "layout layer"), "layout layer");
    for (const Json& jpe : require_field(jl, "pes", "layout layer")) {
      ProcessingElement pe;
      pe.channel = jpe["channel"].get<std::size_t>();
      pe.input_rows = jpe["input_rows"].get<std::size_t>();
      pe.input_cols = jpe["input_cols"].get<std::size_t>();
      pe.pruned = jpe["pruned"].get<bool>();
      pe.skip_lut = jpe["skip_lut"].get<std::vector<std::uint8_t>>();
      for (const Json& ja : jpe["weight_subarrays"]) {
        SubArray sa;
        sa.filter = ja["filter"].get<std::size_t>();
        sa.rows = ja["rows"].get<std::size_t>();
        sa.cols = ja["cols"].get<std::size_t>();
        sa.pruned = ja["pruned"].get<bool>();
        sa.kernel_levels = ja["kernel_levels"].get<std::vector<std::int64_t>>();
        pe.weight_subarrays.push_back(std::move(sa));
      }
      pll.pes.push_back(std::move(pe));
    }
    layout.layers.push_back(std::move(pll));
  }
  return layout;
}

inline Json trace_to_json(const SimTrace& trace, std::optional<std::int64_t> seed,
                          std::size_t samples_verified) {
  Json doc;
  doc["format"] = kTraceFormat;
  if (seed) doc["seed"] = *seed;
  doc["samples_verified"] = samples_verified;
  Json layers = Json::array();
  for (const LayerTrace& lt : trace.layers) {
    Json jl;
    jl["layer"] = lt.layer;
    jl["kernel_positions"] = lt.kernel_positions;
    jl["active_pes"] = lt.active_pes;
    jl["max_row_ops_per_pe"] = lt.max_row_ops_per_pe;
    jl["and_row_ops"] = lt.ops.and_row_ops;
    jl["and_cell_ops"] = lt.ops.and_cell_ops;
    jl["bitcounts"] = lt.ops.bitcounts;
    jl["shift_accums"] = lt.ops.shift_accums;
    jl["input_writes"] = lt.ops.input_writes;
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  const BitConvTrace total = trace.total();
  Json jt;
  jt["and_row_ops"] = total.and_row_ops;
  jt["and_cell_ops"] = total.and_cell_ops;
  jt["bitcounts"] = total.bitcounts;
  jt["shift_accums"] = total.shift_accums;
  jt["input_writes"] = total.input_writes;
  doc["total"] = std::move(jt);
  return doc;
}

inline SimTrace trace_from_json(const Json& doc) {
  require_format(doc, kTraceFormat, "trace");
  SimTrace trace;
  for (const Json& jl : require_field(doc, "layers", "trace")) {
    LayerTrace lt;
    lt.layer = jl["layer"].get<std::size_t>();
    lt.kernel_positions = jl["kernel_positions"].get<std::uint64_t>();
    lt.active_pes = jl["active_pes"].get<std::uint64_t>();
    lt.max_row_ops_per_pe = jl["max_row_ops_per_pe"].get<std::uint64_t>();
    lt.ops.and_row_ops = jl["and_row_ops"].get<std::uint64_t>();
    lt.ops.and_cell_ops = jl["and_cell_ops"].get<std::uint64_t>();
    lt.ops.bitcounts = jl["bitcounts"].get<std::uint64_t>();
    lt.ops.shift_accums = jl["shift_accums"].get<std::uint64_t>();
    lt.ops.input_writes = jl["input_writes"].get<std::uint64_t>();
    trace.layers.push_back(lt);
  }
  return trace;
}

inline Json report_to_json(const CostReport& report, std::optional<std::int64_t> seed,
                           const std::optional<CostComparison>& cmp) {
  Json doc;
  doc["format"] = kReportFormat;
  if (seed) doc["seed"] = *seed;
  doc["area_um2"] = report.area_um2;
  doc["cycles_per_inference"] = report.cycles_per_inference;
  doc["latency_s"] = report.latency_s;
  doc["dynamic_energy_pj"] = report.dynamic_energy_pj;
  doc["static_energy_pj"] = report.static_energy_pj;
  doc["energy_per_inference_pj"] = report.energy_per_inference_pj;
  doc["average_power_uw"] = report.average_power_uw;
  doc["throughput_inferences_per_s"] = report.throughput_inferences_per_s;
  doc["pes"] = report.pes;
  Json layers = Json::array();
  for (const LayerCost& lc : report.layers) {
    Json jl;
    jl["layer"] = lc.layer;
    jl["area_um2"] = lc.area_um2;
    jl["dynamic_energy_pj"] = lc.dynamic_energy_pj;
    jl["cycles"] = lc.cycles;
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  if (cmp) {
    Json jc;
    jc["area_reduction"] = cmp->area_reduction;
    jc["power_reduction"] = cmp->power_reduction;
    jc["throughput_gain"] = cmp->throughput_gain;
    doc["vs_baseline"] = std::move(jc);
  }
  return doc;
}

inline CostReport report_from_json(const Json& doc) {
  require_format(doc, kReportFormat, "report");
  CostReport report;
  report.area_um2 = doc["area_um2"].get<double>();
  report.cycles_per_inference = doc["cycles_per_inference"].get<double>();
  report.latency_s = doc["latency_s"].get<double>();
  report.dynamic_energy_pj = doc["dynamic_energy_pj"].get<double>();
  report.static_energy_pj = doc["static_energy_pj"].get<double>();
  report.energy_per_inference_pj = doc["energy_per_inference_pj"].get<double>();
  report.average_power_uw = doc["average_power_uw"].get<double>();
  report.throughput_inferences_per_s = doc["throughput_inferences_per_s"].get<double>();
  report.pes = doc["pes"].get<std::size_t>();
  for (const Json& jl : doc["layers"]) {
    LayerCost lc;
    lc.layer = jl["layer"].get<std::size_t>();
    lc.area_um2 = jl["area_um2"].get<double>();
    lc.dynamic_energy_pj = jl["dynamic_energy_pj"].get<double>();
    lc.cycles = jl["cycles"].get<double>();
    report.layers.push_back(lc);
  }
  return report;
}

}  // namespace pimforge
