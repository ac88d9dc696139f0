#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bnf/model.hpp"
#include "bnf/net.hpp"
#include "bnf/rng.hpp"

using namespace bnf;

namespace {
LayerSpec conv(int f, int k) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::Conv;
  l.filters = f;
  l.kernel = k;
  return l;
}
LayerSpec mp(int p) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::MaxPool;
  l.pool = p;
  return l;
}
LayerSpec fc(int u) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::FullyConnected;
  l.units = u;
  return l;
}
LayerSpec head() {
  LayerSpec l;
  l.kind = LayerSpec::Kind::SoftmaxHead;
  return l;
}
}  // namespace

TEST_CASE("parse basic sequence") {
  const auto layers = parse_architecture("24-C3+MP2+FC256+Softmax");
  REQUIRE(layers.size() == 4);
  CHECK(layers[0] == conv(24, 3));
  CHECK(layers[1] == mp(2));
  CHECK(layers[2] == fc(256));
  CHECK(layers[3] == head());
}

TEST_CASE("repetition groups expand in place") {
  const auto layers = parse_architecture("2x(64-C3)");
  REQUIRE(layers.size() == 2);
  CHECK(layers[0] == conv(64, 3));
  CHECK(layers[1] == conv(64, 3));

  // nested bodies with multiple tokens
  const auto nested = parse_architecture("2x(8-C3+MP2)+Softmax");
  REQUIRE(nested.size() == 5);
  CHECK(nested[0] == conv(8, 3));
  CHECK(nested[1] == mp(2));
  CHECK(nested[2] == conv(8, 3));
  CHECK(nested[3] == mp(2));
}

TEST_CASE("repetition equals concatenated copies of the body") {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int reps = 1 + static_cast<int>(below(g, 4));
    const std::string body = std::to_string(1 + below(g, 64)) + "-C3+MP2";
    const auto expanded = parse_architecture(std::to_string(reps) + "x(" + body + ")");
    const auto single = parse_architecture(body);
    REQUIRE(expanded.size() == single.size() * static_cast<size_t>(reps));
    for (size_t i = 0; i < expanded.size(); ++i) {
      REQUIRE(expanded[i] == single[i % single.size()]);
    }
  }
}

TEST_CASE("minus binds to conv tokens and separates elsewhere") {
  const auto layers = parse_architecture("48-C5+MP2-2x(64-C3)-MP2-FC512-Softmax");
  REQUIRE(layers.size() == 7);
  CHECK(layers[0] == conv(48, 5));
  CHECK(layers[1] == mp(2));
  CHECK(layers[2] == conv(64, 3));
  CHECK(layers[3] == conv(64, 3));
  CHECK(layers[4] == mp(2));
  CHECK(layers[5] == fc(512));
  CHECK(layers[6] == head());
}

TEST_CASE("parse errors carry character offsets") {
  try {
    parse_architecture("MP0");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset == 2);
  }

  CHECK_THROWS_AS(parse_architecture(""), ParseError);
  CHECK_THROWS_AS(parse_architecture("24-Q3"), ParseError);
  CHECK_THROWS_AS(parse_architecture("0x(MP2)"), ParseError);
  CHECK_THROWS_AS(parse_architecture("2x(MP2"), ParseError);
  CHECK_THROWS_AS(parse_architecture("Blah"), ParseError);
  CHECK_THROWS_AS(parse_architecture("FC"), ParseError);
  CHECK_THROWS_AS(parse_architecture("24"), ParseError);
}

TEST_CASE("render/parse round trip on the preset strings") {
  for (const char* name : {"pamap2", "svhn", "cifar10"}) {
    const auto layers = parse_architecture(preset_architecture(name));
    const auto again = parse_architecture(render_architecture(layers));
    REQUIRE(again == layers);
  }
}

TEST_CASE("render/parse round trip on random architectures") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LayerSpec> layers;
    const int blocks = static_cast<int>(below(g, 4));
    for (int b = 0; b < blocks; ++b) {
      layers.push_back(conv(1 + static_cast<int>(below(g, 128)),
                            1 + 2 * static_cast<int>(below(g, 3))));
      if (below(g, 2)) layers.push_back(mp(2 + static_cast<int>(below(g, 2))));
    }
    const int fcs = static_cast<int>(below(g, 3));
    for (int f = 0; f < fcs; ++f) layers.push_back(fc(1 + static_cast<int>(below(g, 512))));
    layers.push_back(head());
    const std::string text = render_architecture(layers);
    REQUIRE(parse_architecture(text) == layers);
  }
}

TEST_CASE("pamap2 preset") {
  const ModelConfig cfg = preset("pamap2", FirstLayerMode::Baseline);
  CHECK(cfg.conv_layer_count() == 3);
  CHECK(cfg.input_shape == Shape{7, 100, 1});
  CHECK(cfg.axis == ConvAxisPolicy::TimeOnly);
  CHECK(cfg.num_classes == 7);
  // the normalized token: every conv kernel is 3
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerSpec::Kind::Conv) CHECK(l.kernel == 3);
  }
  CHECK(cfg.conv_kernel(3) == std::make_pair(1, 3));
  CHECK(cfg.pool_window(2) == std::make_pair(1, 2));
}

TEST_CASE("svhn preset has 7 weighted layers") {
  const ModelConfig cfg = preset("svhn", FirstLayerMode::Baseline);
  CHECK(cfg.weighted_layer_count() == 7);
  CHECK(cfg.input_shape == Shape{40, 40, 3});
}

TEST_CASE("cifar10 preset starts with 128 filters") {
  const ModelConfig cfg = preset("cifar10", FirstLayerMode::Baseline);
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerSpec::Kind::Conv) {
      CHECK(l.filters == 128);
      break;
    }
  }
  CHECK(cfg.input_shape == Shape{32, 32, 3});
}

TEST_CASE("presets validate and build in all four first-layer modes") {
  for (const char* name : {"pamap2", "svhn", "cifar10"}) {
    for (FirstLayerMode mode : {FirstLayerMode::Baseline, FirstLayerMode::Fpid,
                                FirstLayerMode::Dbi, FirstLayerMode::Bil}) {
      const int k = mode == FirstLayerMode::Bil ? 64 : 0;
      const ModelConfig cfg = preset(name, mode, k, 8);
      CHECK_NOTHROW(cfg.validate());
      BuildOptions opt;
      opt.seed = 1;
      const Network net = [&] { return build_network(cfg, opt); }();
      CHECK(const_cast<Network&>(net).params().size() > 0);
    }
  }
}

TEST_CASE("unknown preset and invalid configs are rejected") {
  CHECK_THROWS_AS(preset("mnist", FirstLayerMode::Baseline), std::invalid_argument);

  ModelConfig cfg = preset("pamap2", FirstLayerMode::Baseline);
  cfg.layers.pop_back();  // drop the softmax head
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  ModelConfig missing_k = preset("pamap2", FirstLayerMode::Baseline);
  missing_k.mode = FirstLayerMode::Bil;
  CHECK_THROWS_AS(missing_k.validate(), std::invalid_argument);

  ModelConfig stray_k = preset("pamap2", FirstLayerMode::Baseline);
  stray_k.bil_filters = 8;
  CHECK_THROWS_AS(stray_k.validate(), std::invalid_argument);
}
