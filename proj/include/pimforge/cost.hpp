#pragma once

#include <string>
#include <vector>

#include "pimforge/json_io.hpp"
#include "pimforge/pim.hpp"

namespace pimforge {

// Linear per-component cost parameters. Absolute numbers belong to
// device-level tools; these defaults are order-of-magnitude values for a
// 32nm-class part, meant for relative comparisons. Every estimate is linear
// in them.
struct CostParams {
  double area_per_cell_um2 = 0.06;
  double area_per_subarray_overhead_um2 = 12.0;
  double area_per_pe_overhead_um2 = 220.0;
  double energy_per_and_row_op_pj = 0.9;
  double energy_per_bitcount_pj = 0.25;
  double energy_per_shift_accum_pj = 0.15;
  double energy_per_input_write_pj = 6.0;  // SOT-MRAM writes are the costly op
  double cycles_per_and_row_op = 1.0;
  double cycles_per_input_write = 4.0;
  double static_power_per_pe_uw = 1.2;
  double clock_mhz = 500.0;

  void validate() const {
    const double vals[] = {area_per_cell_um2,         area_per_subarray_overhead_um2,
                           area_per_pe_overhead_um2,  energy_per_and_row_op_pj,
                           energy_per_bitcount_pj,    energy_per_shift_accum_pj,
                           energy_per_input_write_pj, cycles_per_and_row_op,
                           cycles_per_input_write,    static_power_per_pe_uw};
    for (double v : vals) {
      if (v < 0.0) throw ConfigError("cost params must be non-negative");
    }
    if (clock_mhz <= 0.0) throw ConfigError("cost params: clock must be positive");
  }
};

struct LayerCost {
  std::size_t layer = 0;
  double area_um2 = 0.0;
  double dynamic_energy_pj = 0.0;
  double cycles = 0.0;

  bool operator==(const LayerCost&) const = default;
};

struct CostReport {
  double area_um2 = 0.0;
  double cycles_per_inference = 0.0;
  double latency_s = 0.0;
  double dynamic_energy_pj = 0.0;
  double static_energy_pj = 0.0;
  double energy_per_inference_pj = 0.0;
  double average_power_uw = 0.0;
  double throughput_inferences_per_s = 0.0;
  std::size_t pes = 0;
  std::vector<LayerCost> layers;

  bool operator==(const CostReport&) const = default;
};

// Ratios relative to a dense baseline, oriented so that > 1 means better.
struct CostComparison {
  double area_reduction = 1.0;     // baseline area / compressed area
  double power_reduction = 1.0;    // baseline power / compressed power
  double throughput_gain = 1.0;    // compressed throughput / baseline throughput
};

// Area and static power follow the physical structure (Lut mode keeps pruned
// arrays on silicon); dynamic energy and cycles follow the effective op
// counts. Latency per layer is the critical PE: PEs run in parallel, the
// sub-arrays inside a PE run sequentially, as do the row pairs inside a
// sub-array.
inline CostReport estimate(const PimLayout& layout, const SimTrace& trace,
                           const CostParams& params) {
  params.validate();
  if (trace.layers.size() != layout.layers.size()) {
    throw ConfigError("estimate: trace covers " + std::to_string(trace.layers.size()) +
                      " layers but the layout has " + std::to_string(layout.layers.size()));
  }
  const LayoutStats stats = layout_stats(layout);
  CostReport report;
  report.pes = stats.total.pes;
  for (std::size_t i = 0; i < layout.layers.size(); ++i) {
    const LayerLayoutStats& ls = stats.layers[i];
    const LayerTrace& lt = trace.layers[i];
    LayerCost lc;
    lc.layer = i;
    lc.area_um2 =
        static_cast<double>(ls.weight_cells + ls.input_cells) * params.area_per_cell_um2 +
        static_cast<double>(ls.weight_subarrays + ls.pes) * params.area_per_subarray_overhead_um2 +
        static_cast<double>(ls.pes) * params.area_per_pe_overhead_um2;
    lc.dynamic_energy_pj =
        static_cast<double>(lt.ops.and_row_ops) * params.energy_per_and_row_op_pj +
        static_cast<double>(lt.ops.bitcounts) * params.energy_per_bitcount_pj +
        static_cast<double>(lt.ops.shift_accums) * params.energy_per_shift_accum_pj +
        static_cast<double>(lt.ops.input_writes) * params.energy_per_input_write_pj;
    lc.cycles = static_cast<double>(lt.max_row_ops_per_pe) * params.cycles_per_and_row_op +
                static_cast<double>(lt.kernel_positions) * params.cycles_per_input_write;
    report.area_um2 += lc.area_um2;
    report.dynamic_energy_pj += lc.dynamic_energy_pj;
    report.cycles_per_inference += lc.cycles;
    report.layers.push_back(lc);
  }
  report.latency_s = report.cycles_per_inference / (params.clock_mhz * 1e6);
  report.static_energy_pj = static_cast<double>(report.pes) * params.static_power_per_pe_uw *
                            report.latency_s * 1e6;  // uW * s -> pJ
  report.energy_per_inference_pj = report.dynamic_energy_pj + report.static_energy_pj;
  report.average_power_uw =
      report.latency_s > 0.0 ? report.energy_per_inference_pj / (report.latency_s * 1e6) : 0.0;
  report.throughput_inferences_per_s =
      report.latency_s > 0.0 ? 1.0 / report.latency_s : 0.0;
  return report;
}

inline CostComparison compare(const CostReport& compressed, const CostReport& baseline) {
  if (baseline.area_um2 <= 0.0 || baseline.average_power_uw <= 0.0 ||
      baseline.throughput_inferences_per_s <= 0.0) {
    throw ConfigError("compare: baseline report has zero area, power or throughput");
  }
  CostComparison cmp;
  cmp.area_reduction = baseline.area_um2 / compressed.area_um2;
  cmp.power_reduction = baseline.average_power_uw / compressed.average_power_uw;
  cmp.throughput_gain =
      compressed.throughput_inferences_per_s / baseline.throughput_inferences_per_s;
  return cmp;
}

inline Json cost_params_to_json(const CostParams& p) {
  Json j;
  j["area_per_cell_um2"] = p.area_per_cell_um2;
  j["area_per_subarray_overhead_um2"] = p.area_per_subarray_overhead_um2;
  j["area_per_pe_overhead_um2"] = p.area_per_pe_overhead_um2;
  j["energy_per_and_row_op_pj"] = p.energy_per_and_row_op_pj;
  j["energy_per_bitcount_pj"] = p.energy_per_bitcount_pj;
  j["energy_per_shift_accum_pj"] = p.energy_per_shift_accum_pj;
  j["energy_per_input_write_pj"] = p.energy_per_input_write_pj;
  j["cycles_per_and_row_op"] = p.cycles_per_and_row_op;
  j["cycles_per_input_write"] = p.cycles_per_input_write;
  j["static_power_per_pe_uw"] = p.static_power_per_pe_uw;
  j["clock_mhz"] = p.clock_mhz;
  return j;
}

inline CostParams cost_params_from_json(const Json& j) {
  CostParams p;
  auto get = [&](const char* key, double& out) {
    if (j.contains(key)) out = j[key].get<double>();
  };
  get("area_per_cell_um2", p.area_per_cell_um2);
  get("area_per_subarray_overhead_um2", p.area_per_subarray_overhead_um2);
  get("area_per_pe_overhead_um2", p.area_per_pe_overhead_um2);
  get("energy_per_and_row_op_pj", p.energy_per_and_row_op_pj);
  get("energy_per_bitcount_pj", p.energy_per_bitcount_pj);
  get("energy_per_shift_accum_pj", p.energy_per_shift_accum_pj);
  get("energy_per_input_write_pj", p.energy_per_input_write_pj);
  get("cycles_per_and_row_op", p.cycles_per_and_row_op);
  get("cycles_per_input_write", p.cycles_per_input_write);
  get("static_power_per_pe_uw", p.static_power_per_pe_uw);
  get("clock_mhz", p.clock_mhz);
  p.validate();
  return p;
}

}  // namespace pimforge
