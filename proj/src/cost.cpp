#include "bnf/cost.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace bnf {

void FirstLayerDims::validate() const {
  if (H < 1 || W < 1 || C < 1 || M < 1 || F_elems < 1 || I < 1) {
    throw std::invalid_argument("FirstLayerDims: H, W, C, M, F_elems, I must all be >= 1");
  }
}

GateCostTable GateCostTable::defaults(uint64_t M) {
  GateCostTable t;
  t.fixed_by_binary_mult = static_cast<double>(M);
  return t;
}

void GateCostTable::validate() const {
  if (binary_mult <= 0.0 || fixed_by_binary_mult <= 0.0 || float_mult <= 0.0) {
    throw std::invalid_argument("GateCostTable: all gate costs must be positive");
  }
}

namespace {

uint64_t checked_mul(uint64_t a, uint64_t b) {
  uint64_t r;
  if (__builtin_mul_overflow(a, b, &r)) {
    throw std::overflow_error("cost model: multiplication count overflows 64 bits");
  }
  return r;
}

uint64_t checked_add(uint64_t a, uint64_t b) {
  uint64_t r;
  if (__builtin_add_overflow(a, b, &r)) {
    throw std::overflow_error("cost model: count overflows 64 bits");
  }
  return r;
}

uint64_t product(std::initializer_list<uint64_t> xs) {
  uint64_t r = 1;
  for (uint64_t x : xs) r = checked_mul(r, x);
  return r;
}

double gates_per_mult(FirstLayerMode a, const GateCostTable& g) {
  switch (a) {
    case FirstLayerMode::Baseline: return g.float_mult;
    case FirstLayerMode::Fpid: return g.fixed_by_binary_mult;
    case FirstLayerMode::Dbi: return g.binary_mult;
    case FirstLayerMode::Bil: return g.binary_mult;
  }
  return 0.0;
}

}  // namespace

uint64_t mult_count(FirstLayerMode approach, const FirstLayerDims& d) {
  d.validate();
  switch (approach) {
    case FirstLayerMode::Baseline:
    case FirstLayerMode::Fpid:
      return product({d.H, d.W, d.C, d.F_elems, d.I});
    case FirstLayerMode::Dbi:
      return product({d.H, d.W, d.C, d.F_elems, d.I, d.M});
    case FirstLayerMode::Bil: {
      if (d.K < 1) throw std::invalid_argument("mult_count: BIL requires K >= 1");
      const uint64_t inner = checked_add(checked_mul(d.M, d.C), checked_mul(d.F_elems, d.I));
      return product({d.H, d.W, d.K, inner});
    }
  }
  throw std::invalid_argument("mult_count: bad approach");
}

uint64_t weight_count(FirstLayerMode approach, const FirstLayerDims& d) {
  d.validate();
  switch (approach) {
    case FirstLayerMode::Baseline:
    case FirstLayerMode::Fpid:
      return product({d.C, d.F_elems, d.I});
    case FirstLayerMode::Dbi:
      return product({d.C, d.F_elems, d.I, d.M});
    case FirstLayerMode::Bil: {
      if (d.K < 1) throw std::invalid_argument("weight_count: BIL requires K >= 1");
      return checked_add(product({d.C, d.M, d.K}), product({d.F_elems, d.I, d.K}));
    }
  }
  throw std::invalid_argument("weight_count: bad approach");
}

void apply_relative_area(std::vector<CostReport>& reports) {
  const CostReport* base = nullptr;
  for (const auto& r : reports) {
    if (r.approach == FirstLayerMode::Baseline) base = &r;
  }
  if (!base) throw std::invalid_argument("relative_area: baseline report missing");
  if (base->gate_count <= 0.0) throw std::invalid_argument("relative_area: zero baseline");
  for (auto& r : reports) {
    r.relative_area_pct = 100.0 * r.gate_count / base->gate_count;
  }
}

std::vector<CostReport> cost_table(const FirstLayerDims& d, const GateCostTable& gates) {
  gates.validate();
  std::vector<CostReport> out;
  for (FirstLayerMode a : {FirstLayerMode::Baseline, FirstLayerMode::Fpid, FirstLayerMode::Dbi,
                           FirstLayerMode::Bil}) {
    if (a == FirstLayerMode::Bil && d.K < 1) continue;
    CostReport r;
    r.approach = a;
    r.mult_count = mult_count(a, d);
    r.weight_count = weight_count(a, d);
    r.gate_count = static_cast<double>(r.mult_count) * gates_per_mult(a, gates);
    out.push_back(r);
  }
  apply_relative_area(out);
  return out;
}

std::string format_cost_table_text(const std::vector<CostReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "approach" << std::right << std::setw(16) << "mults"
     << std::setw(14) << "weights" << std::setw(18) << "gates" << std::setw(12) << "rel_area%"
     << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(10) << to_string(r.approach) << std::right << std::setw(16)
       << r.mult_count << std::setw(14) << r.weight_count << std::setw(18) << std::fixed
       << std::setprecision(0) << r.gate_count << std::setw(12) << std::setprecision(2)
       << r.relative_area_pct << "\n";
  }
  return os.str();
}

std::string format_cost_table_csv(const std::vector<CostReport>& reports) {
  std::ostringstream os;
  os << "approach,mult_count,weight_count,gate_count,relative_area_pct\n";
  for (const auto& r : reports) {
    os << to_string(r.approach) << "," << r.mult_count << "," << r.weight_count << ","
       << std::fixed << std::setprecision(1) << r.gate_count << "," << std::setprecision(4)
       << r.relative_area_pct << "\n";
  }
  return os.str();
}

FirstLayerDims first_layer_dims(const ModelConfig& cfg) {
  const LayerSpec* first_conv = nullptr;
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerSpec::Kind::Conv) {
      first_conv = &l;
      break;
    }
  }
  if (!first_conv) throw std::invalid_argument("first_layer_dims: model has no conv layer");
  const auto [kh, kw] = cfg.conv_kernel(first_conv->kernel);
  FirstLayerDims d;
  d.H = cfg.input_shape[0];
  d.W = cfg.input_shape[1];
  d.C = cfg.input_shape[2];
  d.M = static_cast<uint64_t>(cfg.bit_width);
  d.F_elems = static_cast<uint64_t>(kh) * static_cast<uint64_t>(kw);
  d.I = static_cast<uint64_t>(first_conv->filters);
  d.K = static_cast<uint64_t>(cfg.bil_filters);
  return d;
}

}  // namespace bnf
