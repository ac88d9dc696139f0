#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "bnf/data.hpp"
#include "bnf/train.hpp"
#include "gradcheck.hpp"

using namespace bnf;

TEST_CASE("linear node gradient: y = w*x, dL/dw = x") {
  // One input, one output, loss gradient 1 at the output.
  LinearLayer lin("lin", 1, 1, WeightMode::FullPrecision, false, 1);
  BatchT x(1, 1, 1, 1);
  x.v[0] = 3.0;
  lin.forward(x, true);
  BatchT dy(1, 1, 1, 1);
  dy.v[0] = 1.0;
  lin.backward(dy);
  std::vector<Param*> ps;
  lin.collect_params(ps);
  REQUIRE(ps.size() == 1);
  CHECK(ps[0]->grad[0] == 3.0);
}

namespace {

ModelConfig tiny_config(const std::string& arch, FirstLayerMode mode, int k, const Shape& input,
                        int classes, ConvAxisPolicy axis = ConvAxisPolicy::Full2d) {
  ModelConfig cfg;
  cfg.layers = parse_architecture(arch);
  cfg.mode = mode;
  cfg.bil_filters = k;
  cfg.bit_width = 8;
  cfg.input_shape = input;
  cfg.axis = axis;
  cfg.num_classes = classes;
  cfg.validate();
  return cfg;
}

BatchT random_real_batch(int n, int h, int w, int c, uint64_t seed) {
  std::mt19937_64 g(seed);
  BatchT x(n, h, w, c);
  for (double& v : x.v) v = uniform01(g);
  return x;
}

std::vector<int> random_labels(int n, int classes, uint64_t seed) {
  std::mt19937_64 g(mix_seed(seed, 0x1ab));
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(below(g, classes));
  return labels;
}

}  // namespace

TEST_CASE("analytic gradients match central differences on the float path") {
  // Smooth stack (conv, batch norm, two linear layers, softmax head): the
  // finite-difference oracle is only valid away from clamp kinks, so the
  // bounded activation is exercised by its own kink-safe check below.
  const ModelConfig cfg =
      tiny_config("3-C3+FC16+Softmax", FirstLayerMode::Baseline, 0, Shape{6, 6, 2}, 2);
  BuildOptions opt;
  opt.binarize_hidden = false;
  opt.quantize_activations = false;
  opt.use_bounded_activation = false;
  opt.dropout_rate = 0.0;
  opt.seed = 6;
  Network net = build_network(cfg, opt);
  const BatchT x = random_real_batch(32, 6, 6, 2, 6 * 77 + 1);
  const std::vector<int> labels = random_labels(32, 2, 6 * 77 + 1);
  const auto res = gradcheck::run(net, x, labels, 100, 1e-3, 6 * 13 + 5);
  CHECK(res.checked == 100);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("clamp and pool backward match finite differences away from kinks") {
  std::mt19937_64 g(41);

  // bounded activation: inputs at least 0.05 from the clamp corners
  {
    ActQuantLayer act("act", false, 1);
    BatchT x(2, 1, 4, 3);
    for (double& v : x.v) {
      do {
        v = uniform(g, -0.5, 1.5);
      } while (std::fabs(v) < 0.05 || std::fabs(v - 1.0) < 0.05);
    }
    BatchT r(2, 1, 4, 3);
    for (double& v : r.v) v = normal(g);
    act.forward(x, true);
    const BatchT dx = act.backward(r);
    const double h = 1e-3;
    for (size_t i = 0; i < x.v.size(); ++i) {
      auto f = [&](double delta) {
        BatchT xp = x;
        xp.v[i] += delta;
        const BatchT out = act.forward(xp, true);
        double s = 0.0;
        for (size_t j = 0; j < out.v.size(); ++j) s += out.v[j] * r.v[j];
        return s;
      };
      const double fd = (f(h) - f(-h)) / (2.0 * h);
      REQUIRE(gradcheck::rel_err(dx.v[i], fd) <= 1e-6);
    }
    act.forward(x, true);  // restore the cached state for sanity
  }

  // max pool: distinct window values with a comfortable margin
  {
    MaxPoolLayer pool("pool", 1, 2);
    BatchT x(1, 2, 4, 2);
    std::vector<size_t> perm(x.v.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    shuffle_deterministic(perm, g);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = 0.1 * static_cast<double>(perm[i]);
    BatchT r(1, 2, 2, 2);
    for (double& v : r.v) v = normal(g);
    pool.forward(x, true);
    const BatchT dx = pool.backward(r);
    const double h = 1e-3;
    for (size_t i = 0; i < x.v.size(); ++i) {
      auto f = [&](double delta) {
        BatchT xp = x;
        xp.v[i] += delta;
        const BatchT out = pool.forward(xp, true);
        double s = 0.0;
        for (size_t j = 0; j < out.v.size(); ++j) s += out.v[j] * r.v[j];
        return s;
      };
      const double fd = (f(h) - f(-h)) / (2.0 * h);
      REQUIRE(gradcheck::rel_err(dx.v[i], fd) <= 1e-6);
    }
  }
}

TEST_CASE("quantized path gradients are finite and shaped like the parameters") {
  const ModelConfig cfg =
      tiny_config("4-C3+MP2+FC8+Softmax", FirstLayerMode::Dbi, 0, Shape{1, 16, 1}, 2,
                  ConvAxisPolicy::TimeOnly);
  BuildOptions opt;
  opt.seed = 5;
  Network net = build_network(cfg, opt);

  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 8;
  spec.seed = 1;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  std::vector<const FixedTensor*> windows;
  std::vector<int> labels;
  for (const auto& s : ds.samples) {
    windows.push_back(&s.window);
    labels.push_back(s.label);
  }
  const BatchT x = encode_batch(windows, FirstLayerMode::Dbi);
  net.begin_step(1);
  net.zero_grads();
  const double loss = net.loss_and_backward(x, labels);
  CHECK(std::isfinite(loss));
  for (Param* p : net.params()) {
    REQUIRE(p->grad.size() == p->value.size());
    for (double gv : p->grad) REQUIRE(std::isfinite(gv));
  }
}

TEST_CASE("adam single step from a fresh state") {
  std::vector<double> value{0.0};
  const std::vector<double> grad{1.0};
  AdamState st;
  const AdamParams p;
  adam_step(value, grad, st, 0.1, p);
  // mhat = vhat = 1 exactly after one unit-gradient step
  const double expect = -0.1 * (1.0 / (1.0 + p.eps));
  CHECK(value[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(value[0] == doctest::Approx(-0.0999999).epsilon(1e-6));
}

TEST_CASE("adam ignores zero gradients") {
  std::vector<double> value{0.7, -0.3};
  const std::vector<double> grad{0.0, 0.0};
  AdamState st;
  adam_step(value, grad, st, 0.5, AdamParams{});
  CHECK(value[0] == 0.7);
  CHECK(value[1] == -0.3);
}

TEST_CASE("adam two identical unit steps move by the same bias-corrected amount") {
  // Closed form: with g = 1 both moments bias-correct to exactly 1 at t = 1
  // and t = 2, so the two updates coincide at -lr/(1 + eps).
  std::vector<double> value{0.0};
  const std::vector<double> grad{1.0};
  AdamState st;
  const AdamParams p;
  adam_step(value, grad, st, 0.1, p);
  const double step1 = value[0];
  adam_step(value, grad, st, 0.1, p);
  const double step2 = value[0] - step1;
  CHECK(step1 == doctest::Approx(-0.1 / (1.0 + p.eps)).epsilon(1e-12));
  CHECK(step2 == doctest::Approx(step1).epsilon(1e-12));
}

TEST_CASE("adam rejects shape mismatches") {
  std::vector<double> value{0.0};
  AdamState st;
  CHECK_THROWS_AS(adam_step(value, {1.0, 2.0}, st, 0.1, AdamParams{}), std::invalid_argument);
}

TEST_CASE("learning-rate schedule multiplies at breakpoints") {
  TrainConfig cfg;
  cfg.initial_lr = 1e-3;
  cfg.lr_schedule = {{5, 0.1}, {9, 0.5}};
  CHECK(lr_at_epoch(cfg, 1) == 1e-3);
  CHECK(lr_at_epoch(cfg, 4) == 1e-3);
  CHECK(lr_at_epoch(cfg, 5) == doctest::Approx(1e-4));
  CHECK(lr_at_epoch(cfg, 8) == doctest::Approx(1e-4));
  CHECK(lr_at_epoch(cfg, 9) == doctest::Approx(5e-5));
  CHECK(lr_at_epoch(cfg, 200) == doctest::Approx(5e-5));

  cfg.lr_schedule = {{5, 0.1}, {5, 0.5}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.lr_schedule.clear();
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

namespace {
TrainResult run_linear_sanity(uint64_t seed, std::string* metrics) {
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::Linear;
  spec.samples_per_class = 60;
  spec.width = 8;
  spec.seed = 2;
  const TimeSeriesDataset ds = generate_synthetic(spec);

  const ModelConfig cfg = tiny_config("4-C3+FC8+Softmax", FirstLayerMode::Baseline, 0,
                                      Shape{1, 8, 1}, 2, ConvAxisPolicy::TimeOnly);
  BuildOptions opt;
  opt.binarize_hidden = false;
  opt.quantize_activations = false;
  opt.dropout_rate = 0.0;
  opt.seed = seed;
  Network net = build_network(cfg, opt);

  TrainConfig tc;
  tc.epochs = 20;
  tc.initial_lr = 5e-3;
  tc.lr_schedule.clear();
  tc.batch_size = 16;
  tc.seed = seed;
  std::ostringstream os;
  const TrainResult r = train(net, ds, ds, FirstLayerMode::Baseline, tc, &os);
  if (metrics) *metrics = os.str();
  return r;
}
}  // namespace

TEST_CASE("a tiny float model separates the linear task") {
  const TrainResult r = run_linear_sanity(1, nullptr);
  double best_train = 100.0;
  for (const auto& e : r.history) best_train = std::min(best_train, e.train_err_pct);
  CHECK(best_train <= 2.0);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  std::string m1, m2, m3;
  const TrainResult a = run_linear_sanity(9, &m1);
  const TrainResult b = run_linear_sanity(9, &m2);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    REQUIRE(a.history[i].train_loss == b.history[i].train_loss);
    REQUIRE(a.history[i].val_err_pct == b.history[i].val_err_pct);
  }
  CHECK(m1 == m2);
  run_linear_sanity(10, &m3);
  CHECK(m1 != m3);
}

TEST_CASE("identical seeds give identical final weights") {
  const ModelConfig cfg = tiny_config("4-C3+FC8+Softmax", FirstLayerMode::Dbi, 0, Shape{1, 8, 1},
                                      2, ConvAxisPolicy::TimeOnly);
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 40;
  spec.width = 8;
  spec.seed = 3;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  TrainConfig tc;
  tc.epochs = 3;
  tc.initial_lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 4;

  std::vector<double> w1, w2;
  for (int run = 0; run < 2; ++run) {
    BuildOptions opt;
    opt.seed = 21;
    Network net = build_network(cfg, opt);
    train(net, ds, ds, FirstLayerMode::Dbi, tc, nullptr);
    std::vector<double>& dst = run == 0 ? w1 : w2;
    for (Param* p : net.params()) dst.insert(dst.end(), p->value.begin(), p->value.end());
  }
  REQUIRE(w1.size() == w2.size());
  for (size_t i = 0; i < w1.size(); ++i) REQUIRE(w1[i] == w2[i]);
}

TEST_CASE("latent weights stay full precision while forward uses binarized views") {
  const ModelConfig cfg = tiny_config("4-C3+FC8+Softmax", FirstLayerMode::Dbi, 0, Shape{1, 8, 1},
                                      2, ConvAxisPolicy::TimeOnly);
  BuildOptions opt;
  opt.seed = 2;
  Network net = build_network(cfg, opt);
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 40;
  spec.seed = 5;
  spec.width = 8;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  TrainConfig tc;
  tc.epochs = 2;
  tc.initial_lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 6;
  train(net, ds, ds, FirstLayerMode::Dbi, tc, nullptr);
  // a binarized value set would have at most 2 distinct magnitudes per tensor
  for (Param* p : net.params()) {
    if (p->name.find("conv.w") == std::string::npos) continue;
    std::set<double> mags;
    for (double v : p->value) mags.insert(std::fabs(v));
    REQUIRE(mags.size() > 2);
  }
}

TEST_CASE("diverging training aborts with the epoch index") {
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::Linear;
  spec.samples_per_class = 30;
  spec.width = 8;
  spec.seed = 7;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  const ModelConfig cfg = tiny_config("4-C3+FC8+Softmax", FirstLayerMode::Baseline, 0,
                                      Shape{1, 8, 1}, 2, ConvAxisPolicy::TimeOnly);
  BuildOptions opt;
  opt.binarize_hidden = false;
  opt.quantize_activations = false;
  opt.dropout_rate = 0.0;
  opt.seed = 8;
  Network net = build_network(cfg, opt);
  TrainConfig tc;
  tc.epochs = 50;
  tc.initial_lr = 1e200;  // guaranteed overflow into non-finite loss
  tc.lr_schedule.clear();
  tc.batch_size = 16;
  tc.seed = 9;
  try {
    train(net, ds, ds, FirstLayerMode::Baseline, tc, nullptr);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch >= 1);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

namespace {
// A pass-through layer owning a parameter its backward never touches.
class DeadParamLayer : public Layer {
 public:
  DeadParamLayer() {
    unused_.name = "dead.w";
    unused_.dims = {2};
    unused_.value = {1.0, 2.0};
    unused_.grad = {0.0, 0.0};
  }
  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool) override { return x; }
  BatchT backward(const BatchT& dy) override { return dy; }
  void collect_params(std::vector<Param*>& out) override { out.push_back(&unused_); }

 private:
  std::string name_ = "dead";
  Param unused_;
};
}  // namespace

TEST_CASE("parameters outside the gradient flow stay at zero gradient") {
  Network net;
  net.add(std::make_unique<LinearLayer>("lin", 4, 2, WeightMode::FullPrecision, true, 1));
  net.add(std::make_unique<DeadParamLayer>());
  BatchT x(3, 1, 1, 4);
  std::mt19937_64 g(2);
  for (double& v : x.v) v = normal(g);
  net.zero_grads();
  net.loss_and_backward(x, {0, 1, 0});  // warns about dead.w on stderr
  for (Param* p : net.params()) {
    if (p->name == "dead.w") {
      CHECK(p->grad[0] == 0.0);
      CHECK(p->grad[1] == 0.0);
      CHECK_FALSE(p->grad_written);
    } else {
      CHECK(p->grad_written);
    }
  }
}

TEST_CASE("loso_split builds one fold per subject") {
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 64;
  spec.subjects = 8;
  spec.seed = 10;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  const std::vector<int> subjects{0, 1, 2, 3, 4, 5, 6, 7};
  const FoldPlan plan = loso_split(ds, subjects);
  CHECK(plan.fold_count() == 8);

  size_t val_total = 0;
  for (int held : plan.subjects) {
    const auto [tr, va] = loso_fold(ds, held);
    CHECK(tr.samples.size() + va.samples.size() == ds.samples.size());
    for (const auto& s : va.samples) CHECK(s.subject == held);
    for (const auto& s : tr.samples) CHECK(s.subject != held);
    val_total += va.samples.size();
  }
  // every sample lands in exactly one validation fold
  CHECK(val_total == ds.samples.size());
}

TEST_CASE("loso two-subject case and error handling") {
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 8;
  spec.subjects = 2;
  spec.seed = 11;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  const FoldPlan plan = loso_split(ds, {0, 1});
  CHECK(plan.fold_count() == 2);
  CHECK_THROWS_AS(loso_split(ds, {0}), std::invalid_argument);
  CHECK_THROWS_AS(loso_split(ds, {0, 5}), std::invalid_argument);  // no samples for 5
  CHECK_THROWS_AS(loso_split(ds, {0, 0}), std::invalid_argument);
}

TEST_CASE("checkpoint round trip restores parameters and running stats") {
  const ModelConfig cfg = tiny_config("4-C3+FC8+Softmax", FirstLayerMode::Dbi, 0, Shape{1, 8, 1},
                                      2, ConvAxisPolicy::TimeOnly);
  BuildOptions opt;
  opt.seed = 31;
  Network net = build_network(cfg, opt);
  SynthSpec spec;
  spec.kind = SynthSpec::Kind::BitSeparable;
  spec.samples_per_class = 32;
  spec.width = 8;
  spec.seed = 12;
  const TimeSeriesDataset ds = generate_synthetic(spec);
  TrainConfig tc;
  tc.epochs = 2;
  tc.initial_lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 13;
  train(net, ds, ds, FirstLayerMode::Dbi, tc, nullptr);
  const EvalResult before = evaluate(net, ds, FirstLayerMode::Dbi, 16);

  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "bnf_ckpt_test").string();
  save_network_tensors(dir, net);

  Network fresh = build_network(cfg, opt);
  load_network_tensors(dir, fresh);
  const EvalResult after = evaluate(fresh, ds, FirstLayerMode::Dbi, 16);
  // float32 container storage rounds the doubles; the error rate must agree
  CHECK(after.error_pct == before.error_pct);
  CHECK(after.loss == doctest::Approx(before.loss).epsilon(1e-5));
  fs::remove_all(dir);
}
