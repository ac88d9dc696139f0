#include "bnf/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>

#include "bnf/container.hpp"
#include "bnf/rng.hpp"

namespace bnf {

void adam_step(std::vector<double>& value, const std::vector<double>& grad, AdamState& state,
               double lr, const AdamParams& p) {
  if (value.size() != grad.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(value.size(), 0.0);
    state.v.assign(value.size(), 0.0);
  }
  if (state.m.size() != value.size()) throw std::invalid_argument("adam_step: state mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < value.size(); ++i) {
    state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grad[i];
    state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    value[i] -= lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(initial_lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  int prev = 0;
  for (const auto& [e, mult] : lr_schedule) {
    if (e <= prev) throw std::invalid_argument("TrainConfig: schedule epochs must strictly increase");
    if (!(mult > 0.0)) throw std::invalid_argument("TrainConfig: schedule multipliers must be > 0");
    prev = e;
  }
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.initial_lr;
  for (const auto& [e, mult] : cfg.lr_schedule) {
    if (e <= epoch) lr *= mult;
  }
  return lr;
}

namespace {

BatchT batch_from_indices(const TimeSeriesDataset& ds, const std::vector<size_t>& order,
                          size_t begin, size_t end, FirstLayerMode mode,
                          std::vector<int>* labels) {
  std::vector<const FixedTensor*> windows;
  windows.reserve(end - begin);
  labels->clear();
  for (size_t k = begin; k < end; ++k) {
    const auto& s = ds.samples[order[k]];
    windows.push_back(&s.window);
    labels->push_back(s.label);
  }
  return encode_batch(windows, mode);
}

void write_metrics_row(std::ostream& os, int epoch, const char* split, double err_pct,
                       double loss, double lr) {
  os << epoch << "," << split << "," << std::fixed << std::setprecision(6) << err_pct << ","
     << loss << "," << std::setprecision(10) << lr << "\n";
}

}  // namespace

EvalResult evaluate(Network& net, const TimeSeriesDataset& ds, FirstLayerMode mode,
                    int batch_size) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<size_t> order(ds.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  double loss_sum = 0.0;
  long correct = 0;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    std::vector<int> labels;
    const BatchT xb = batch_from_indices(ds, order, begin, end, mode, &labels);
    int ok = 0;
    loss_sum += net.eval_loss(xb, labels, &ok) * static_cast<double>(end - begin);
    correct += ok;
  }
  EvalResult r;
  r.loss = loss_sum / static_cast<double>(order.size());
  r.error_pct = 100.0 * (1.0 - static_cast<double>(correct) / static_cast<double>(order.size()));
  return r;
}

TrainResult train(Network& net, const TimeSeriesDataset& train_set,
                  const TimeSeriesDataset& val_set, FirstLayerMode mode, const TrainConfig& cfg,
                  std::ostream* metrics_csv) {
  cfg.validate();
  train_set.validate();
  const TimeSeriesDataset& vset = val_set.samples.empty() ? train_set : val_set;

  std::vector<Param*> params = net.params();
  std::vector<AdamState> adam(params.size());

  std::vector<size_t> order(train_set.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (metrics_csv) *metrics_csv << "epoch,split,error_pct,loss,lr\n";

  TrainResult result;
  result.best_val_err_pct = 101.0;
  uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5u, static_cast<uint64_t>(epoch)));
    shuffle_deterministic(order, shuffle_rng);

    double loss_sum = 0.0;
    long correct = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<int> labels;
      const BatchT xb = batch_from_indices(train_set, order, begin, end, mode, &labels);
      net.begin_step(mix_seed(cfg.seed, 0xdu, step));
      net.zero_grads();
      int ok = 0;
      const double loss = net.loss_and_backward(xb, labels, &ok);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(epoch, "loss is not finite (lr " + std::to_string(lr) + ")");
      }
      loss_sum += loss * static_cast<double>(end - begin);
      correct += ok;
      for (size_t pi = 0; pi < params.size(); ++pi) {
        adam_step(params[pi]->value, params[pi]->grad, adam[pi], lr, cfg.adam);
      }
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_err_pct =
        100.0 * (1.0 - static_cast<double>(correct) / static_cast<double>(order.size()));
    const EvalResult ev = evaluate(net, vset, mode, cfg.batch_size);
    rec.val_loss = ev.loss;
    rec.val_err_pct = ev.error_pct;
    result.history.push_back(rec);
    if (metrics_csv) {
      write_metrics_row(*metrics_csv, epoch, "train", rec.train_err_pct, rec.train_loss, lr);
      write_metrics_row(*metrics_csv, epoch, "val", rec.val_err_pct, rec.val_loss, lr);
    }
    if (rec.val_err_pct < result.best_val_err_pct) {
      result.best_val_err_pct = rec.val_err_pct;
      result.best_epoch = epoch;
    }
    result.final_val_err_pct = rec.val_err_pct;
  }
  return result;
}

FoldPlan loso_split(const TimeSeriesDataset& ds, const std::vector<int>& subjects) {
  if (subjects.size() < 2) throw std::invalid_argument("loso_split: need at least 2 subjects");
  std::set<int> seen(subjects.begin(), subjects.end());
  if (seen.size() != subjects.size()) throw std::invalid_argument("loso_split: duplicate subject");
  for (int s : subjects) {
    bool any = false;
    for (const auto& smp : ds.samples) {
      if (smp.subject == s) {
        any = true;
        break;
      }
    }
    if (!any) {
      throw std::invalid_argument("loso_split: subject " + std::to_string(s) + " has no samples");
    }
  }
  FoldPlan plan;
  plan.subjects = subjects;
  return plan;
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> loso_fold(const TimeSeriesDataset& ds,
                                                          int held_out_subject) {
  TimeSeriesDataset tr, va;
  tr.sample_rate_hz = va.sample_rate_hz = ds.sample_rate_hz;
  tr.class_count = va.class_count = ds.class_count;
  tr.bit_width = va.bit_width = ds.bit_width;
  for (const auto& s : ds.samples) {
    (s.subject == held_out_subject ? va : tr).samples.push_back(s);
  }
  if (va.samples.empty()) {
    throw std::invalid_argument("loso_fold: held-out subject has no samples");
  }
  if (tr.samples.empty()) {
    throw std::invalid_argument("loso_fold: no training samples left");
  }
  return {std::move(tr), std::move(va)};
}

namespace {
std::string tensor_filename(const std::string& name) {
  std::string s = name;
  for (char& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-')) {
      ch = '_';
    }
  }
  return s + ".bnt";
}
}  // namespace

void save_network_tensors(const std::string& dir, Network& net) {
  std::filesystem::create_directories(dir);
  for (Param* p : net.params()) {
    Tensor t(p->shape());
    t.data() = p->value;
    write_container(dir + "/" + tensor_filename(p->name), t);
  }
  for (auto& [name, vec] : net.state_tensors()) {
    Tensor t(Shape{static_cast<uint32_t>(vec->size())});
    t.data() = *vec;
    write_container(dir + "/" + tensor_filename(name), t);
  }
}

void load_network_tensors(const std::string& dir, Network& net) {
  auto load_into = [&](const std::string& name, std::vector<double>& dst) {
    const std::string path = dir + "/" + tensor_filename(name);
    const ContainerTensor ct = read_container(path);
    const Tensor* t = std::get_if<Tensor>(&ct);
    if (!t) throw std::runtime_error("checkpoint: " + path + " is not a real tensor");
    if (t->size() != dst.size()) {
      throw std::runtime_error("checkpoint: " + path + " holds " + std::to_string(t->size()) +
                               " values, expected " + std::to_string(dst.size()));
    }
    dst = t->data();
  };
  for (Param* p : net.params()) load_into(p->name, p->value);
  for (auto& [name, vec] : net.state_tensors()) load_into(name, *vec);
}

}  // namespace bnf
