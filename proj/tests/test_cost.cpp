#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnf/cost.hpp"
#include "bnf/layers.hpp"
#include "bnf/rng.hpp"

using namespace bnf;

namespace {
FirstLayerDims pamap2_dims() {
  FirstLayerDims d;
  d.H = 7;
  d.W = 100;
  d.C = 1;
  d.M = 8;
  d.F_elems = 3;
  d.I = 24;
  d.K = 64;
  return d;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }
}  // namespace

TEST_CASE("pamap2 multiplication and weight counts") {
  const FirstLayerDims d = pamap2_dims();
  CHECK(mult_count(FirstLayerMode::Baseline, d) == 50400);
  CHECK(mult_count(FirstLayerMode::Fpid, d) == 50400);
  CHECK(mult_count(FirstLayerMode::Dbi, d) == 403200);
  CHECK(mult_count(FirstLayerMode::Bil, d) == 3584000);

  CHECK(weight_count(FirstLayerMode::Baseline, d) == 72);
  CHECK(weight_count(FirstLayerMode::Fpid, d) == 72);
  CHECK(weight_count(FirstLayerMode::Dbi, d) == 576);
  CHECK(weight_count(FirstLayerMode::Bil, d) == 5120);
}

TEST_CASE("relative areas reproduce the reference percentages") {
  const auto reports = cost_table(pamap2_dims(), GateCostTable::defaults(8));
  REQUIRE(reports.size() == 4);
  CHECK(reports[0].relative_area_pct == 100.0);  // exactly
  CHECK(round2(reports[1].relative_area_pct) == 0.21);
  CHECK(round2(reports[2].relative_area_pct) == 0.21);
  CHECK(round2(reports[3].relative_area_pct) == 1.86);
}

TEST_CASE("unit dims evaluate the formulas to 1 or 2") {
  FirstLayerDims d;
  d.H = d.W = d.C = d.M = d.F_elems = d.I = d.K = 1;
  CHECK(mult_count(FirstLayerMode::Baseline, d) == 1);
  CHECK(mult_count(FirstLayerMode::Fpid, d) == 1);
  CHECK(mult_count(FirstLayerMode::Dbi, d) == 1);
  CHECK(mult_count(FirstLayerMode::Bil, d) == 2);
  CHECK(weight_count(FirstLayerMode::Baseline, d) == 1);
  CHECK(weight_count(FirstLayerMode::Dbi, d) == 1);
  CHECK(weight_count(FirstLayerMode::Bil, d) == 2);
}

TEST_CASE("dbi/baseline multiplication ratio is exactly M") {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 200; ++trial) {
    FirstLayerDims d;
    d.H = 1 + below(g, 20);
    d.W = 1 + below(g, 20);
    d.C = 1 + below(g, 4);
    d.M = 1 + below(g, 16);
    d.F_elems = 1 + below(g, 9);
    d.I = 1 + below(g, 32);
    REQUIRE(mult_count(FirstLayerMode::Dbi, d) ==
            mult_count(FirstLayerMode::Baseline, d) * d.M);
    REQUIRE(weight_count(FirstLayerMode::Dbi, d) ==
            weight_count(FirstLayerMode::Baseline, d) * d.M);
  }
}

TEST_CASE("fpid and dbi always cost the same gates under the default table") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 200; ++trial) {
    FirstLayerDims d;
    d.H = 1 + below(g, 12);
    d.W = 1 + below(g, 12);
    d.C = 1 + below(g, 4);
    d.M = 1 + below(g, 16);
    d.F_elems = 1 + below(g, 9);
    d.I = 1 + below(g, 16);
    d.K = 1 + below(g, 64);
    const auto reports = cost_table(d, GateCostTable::defaults(d.M));
    REQUIRE(reports[1].gate_count == reports[2].gate_count);
    REQUIRE(reports[1].relative_area_pct == reports[2].relative_area_pct);
  }
}

TEST_CASE("relative area of bil grows strictly with K") {
  FirstLayerDims d = pamap2_dims();
  double prev = 0.0;
  for (uint64_t k : {8ull, 16ull, 32ull, 64ull, 128ull, 256ull}) {
    d.K = k;
    const auto reports = cost_table(d, GateCostTable::defaults(8));
    REQUIRE(reports[3].relative_area_pct > prev);
    prev = reports[3].relative_area_pct;
  }
}

TEST_CASE("overflow is rejected with a diagnostic") {
  FirstLayerDims d;
  d.H = d.W = d.C = UINT32_MAX;
  d.M = 16;
  d.F_elems = 9;
  d.I = 1u << 20;
  CHECK_THROWS_AS(mult_count(FirstLayerMode::Dbi, d), std::overflow_error);
}

TEST_CASE("gate table validation and missing baseline") {
  GateCostTable bad;
  bad.float_mult = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  std::vector<CostReport> reports(1);
  reports[0].approach = FirstLayerMode::Dbi;
  reports[0].gate_count = 10.0;
  CHECK_THROWS_AS(apply_relative_area(reports), std::invalid_argument);
}

TEST_CASE("formulas match instrumented reference convolutions") {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int hh = 1 + static_cast<int>(below(g, 6));
    const int ww = 1 + static_cast<int>(below(g, 6));
    const int cc = 1 + static_cast<int>(below(g, 3));
    const int mm = 1 + static_cast<int>(below(g, 8));
    const int ff = 1 + static_cast<int>(below(g, 3));  // kernel side
    const int ii = 1 + static_cast<int>(below(g, 4));
    const int kk = 1 + static_cast<int>(below(g, 8));

    FirstLayerDims d;
    d.H = hh;
    d.W = ww;
    d.C = cc;
    d.M = mm;
    d.F_elems = static_cast<uint64_t>(ff) * ff;
    d.I = ii;
    d.K = kk;

    // baseline / fpid: plain convolution over C channels
    {
      uint64_t counted = 0;
      ConvSpec spec{ff, ff, cc, ii};
      Tensor x(Shape{(uint32_t)hh, (uint32_t)ww, (uint32_t)cc});
      Tensor w(spec.weight_shape());
      conv2d_reference(x, w, spec, &counted);
      REQUIRE(counted == mult_count(FirstLayerMode::Baseline, d));
      REQUIRE(counted == mult_count(FirstLayerMode::Fpid, d));
      REQUIRE(w.size() == weight_count(FirstLayerMode::Baseline, d));
    }
    // dbi: same convolution over C*M bit-plane channels
    {
      uint64_t counted = 0;
      ConvSpec spec{ff, ff, cc * mm, ii};
      Tensor x(Shape{(uint32_t)hh, (uint32_t)ww, (uint32_t)(cc * mm)});
      Tensor w(spec.weight_shape());
      conv2d_reference(x, w, spec, &counted);
      REQUIRE(counted == mult_count(FirstLayerMode::Dbi, d));
      REQUIRE(w.size() == weight_count(FirstLayerMode::Dbi, d));
    }
    // bil: 1x1 stage with K filters over C*M channels, then the first conv
    // layer over K channels
    {
      uint64_t counted = 0;
      ConvSpec stage1{1, 1, cc * mm, kk};
      Tensor x1(Shape{(uint32_t)hh, (uint32_t)ww, (uint32_t)(cc * mm)});
      Tensor w1(stage1.weight_shape());
      conv2d_reference(x1, w1, stage1, &counted);
      ConvSpec stage2{ff, ff, kk, ii};
      Tensor x2(Shape{(uint32_t)hh, (uint32_t)ww, (uint32_t)kk});
      Tensor w2(stage2.weight_shape());
      conv2d_reference(x2, w2, stage2, &counted);
      REQUIRE(counted == mult_count(FirstLayerMode::Bil, d));
      REQUIRE(w1.size() + w2.size() == weight_count(FirstLayerMode::Bil, d));
    }
  }
}

TEST_CASE("first_layer_dims reads the preset geometry") {
  const ModelConfig cfg = preset("pamap2", FirstLayerMode::Bil, 64, 8);
  const FirstLayerDims d = first_layer_dims(cfg);
  CHECK(d.H == 7);
  CHECK(d.W == 100);
  CHECK(d.C == 1);
  CHECK(d.M == 8);
  CHECK(d.F_elems == 3);  // 1x3 kernel under the time-only policy
  CHECK(d.I == 24);
  CHECK(d.K == 64);
}

TEST_CASE("csv and text formatting include every approach") {
  const auto reports = cost_table(pamap2_dims(), GateCostTable::defaults(8));
  const std::string text = format_cost_table_text(reports);
  const std::string csv = format_cost_table_csv(reports);
  for (const char* name : {"baseline", "fpid", "dbi", "bil"}) {
    CHECK(text.find(name) != std::string::npos);
    CHECK(csv.find(name) != std::string::npos);
  }
  CHECK(csv.find("3584000") != std::string::npos);
}
