#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnf/model.hpp"

namespace bnf {

// First-layer dimensions driving the multiplication/weight formulas.
// F_elems is the kernel element count: F*F for square kernels, 3 for the
// 1x3 time-series kernels. K is only meaningful for the BIL approach.
struct FirstLayerDims {
  uint64_t H = 0, W = 0, C = 0, M = 0;
  uint64_t F_elems = 0;
  uint64_t I = 0;
  uint64_t K = 0;

  void validate() const;
};

// NAND-gate-equivalent cost per multiplier kind. Adders, accumulators and
// memory are out of model. The float constant is calibrated so that the
// reference percentages reproduce at two decimals.
struct GateCostTable {
  double binary_mult = 1.0;
  double fixed_by_binary_mult = 8.0;  // one M-bit-by-binary multiply ~ M gates
  double float_mult = 3820.0;

  static GateCostTable defaults(uint64_t M);
  void validate() const;
};

uint64_t mult_count(FirstLayerMode approach, const FirstLayerDims& d);
uint64_t weight_count(FirstLayerMode approach, const FirstLayerDims& d);

struct CostReport {
  FirstLayerMode approach = FirstLayerMode::Baseline;
  uint64_t mult_count = 0;
  uint64_t weight_count = 0;
  double gate_count = 0.0;
  double relative_area_pct = 0.0;  // == relative energy
};

// Reports for all four approaches; relative area is normalized so the
// baseline row is exactly 100.
std::vector<CostReport> cost_table(const FirstLayerDims& d, const GateCostTable& gates);

// Relative area for each report against the baseline entry.
// pct(a) = 100 * gate_count(a) / gate_count(baseline).
void apply_relative_area(std::vector<CostReport>& reports);

std::string format_cost_table_text(const std::vector<CostReport>& reports);
std::string format_cost_table_csv(const std::vector<CostReport>& reports);

// First-layer dims of a model preset (I and F from the first conv token).
FirstLayerDims first_layer_dims(const ModelConfig& cfg);

}  // namespace bnf
