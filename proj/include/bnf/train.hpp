#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bnf/data.hpp"
#include "bnf/net.hpp"

namespace bnf {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

// One bias-corrected ADAM update of value in place.
void adam_step(std::vector<double>& value, const std::vector<double>& grad, AdamState& state,
               double lr, const AdamParams& p);

struct TrainConfig {
  int epochs = 200;
  double initial_lr = 1e-4;
  // Decreasing step schedule: multiply the rate at each breakpoint epoch.
  std::vector<std::pair<int, double>> lr_schedule = {{100, 0.1}, {150, 0.1}};
  int batch_size = 64;
  uint64_t seed = 0;
  AdamParams adam;

  void validate() const;
};

// initial_lr times the product of all multipliers with breakpoint <= epoch.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EvalResult {
  double loss = 0.0;
  double error_pct = 0.0;
};

EvalResult evaluate(Network& net, const TimeSeriesDataset& ds, FirstLayerMode mode,
                    int batch_size);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0, train_err_pct = 0.0;
  double val_loss = 0.0, val_err_pct = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double final_val_err_pct = 0.0;
  // No early stopping is applied; the best epoch is reported alongside the
  // final one so both readings are available.
  double best_val_err_pct = 0.0;
  int best_epoch = 0;
};

struct TrainingDiverged : std::runtime_error {
  int epoch;
  TrainingDiverged(int e, const std::string& msg)
      : std::runtime_error("training diverged at epoch " + std::to_string(e) + ": " + msg),
        epoch(e) {}
};

// Deterministic given (seed, config, data). Writes one train and one val
// record per epoch to metrics_csv when given:
//   epoch,split,error_pct,loss,lr
TrainResult train(Network& net, const TimeSeriesDataset& train_set,
                  const TimeSeriesDataset& val_set, FirstLayerMode mode, const TrainConfig& cfg,
                  std::ostream* metrics_csv = nullptr);

// Leave-one-subject-out folds: fold i trains on every subject except
// subjects[i] and validates on it.
struct FoldPlan {
  std::vector<int> subjects;
  size_t fold_count() const { return subjects.size(); }
};

FoldPlan loso_split(const TimeSeriesDataset& ds, const std::vector<int>& subjects);
std::pair<TimeSeriesDataset, TimeSeriesDataset> loso_fold(const TimeSeriesDataset& ds,
                                                          int held_out_subject);

// Checkpointing: one tensor container file per parameter / state vector.
void save_network_tensors(const std::string& dir, Network& net);
void load_network_tensors(const std::string& dir, Network& net);

}  // namespace bnf
