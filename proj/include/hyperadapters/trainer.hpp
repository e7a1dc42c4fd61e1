#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "hyperadapters/corpus.hpp"
#include "hyperadapters/system.hpp"

namespace hyperadapters {

struct TrainConfig {
  double peak_lr = 3e-3;
  int warmup_steps = 200;
  int total_steps = 2000;
  std::size_t token_budget = 4096;
  double label_smoothing = 0.1;
  double temperature = 2.0;
  int eval_every = 100;
  std::uint64_t seed = 1;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  /// Record per-layer activation SDs each step.
  bool instrument = true;

  void validate() const;
};

struct TrainingRecord {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<double> act_sd;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<TrainingRecord> records;
  /// Best validation loss after each evaluation, in order.
  std::vector<double> best_val_history;
  std::optional<double> best_val_loss;
  int best_step = 0;
  /// Parameter values at best_step, aligned with AdaptedModel::parameters().
  std::vector<Tensor> best_parameters;
  std::optional<int> diverged_at;

  bool diverged() const { return diverged_at.has_value(); }
};

/// Linear warmup to `peak`, then peak * sqrt(warmup / step).
double lr_at(int step, double peak, int warmup);

/// Unweighted mean over languages of each language's mean validation loss.
/// Each pair is credited to its non-pivot language.
double validation_loss(const AdaptedModel& system, const Corpus& corpus, std::span<const ParallelPair> pairs,
                       double label_smoothing, std::map<std::string, double>* per_language = nullptr);

/// SD over non-padding positions and all dimensions of each layer output,
/// encoder layers first.
std::vector<double> activation_sd(const ForwardTrace& trace, const Batch& batch);
std::vector<double> measure_activation_sd(const AdaptedModel& system, const Batch& batch);

/// Lower bound of the label-smoothed loss over a vocabulary of `vocab` ids.
double smoothed_entropy_floor(double alpha, int vocab);

/// Updates `system` in place for `total_steps` Adam steps. Validation runs
/// every eval_every steps and after the last step. A non-finite loss or
/// gradient stops training and records the step.
TrainResult train(AdaptedModel& system, const Corpus& corpus, const TrainConfig& config);

void restore_best(const AdaptedModel& system, const TrainResult& result);

/// One JSON object per record: step, loss, lr, act_sd, val_loss, scheme, d_h.
void write_metrics_jsonl(std::ostream& out, const std::vector<TrainingRecord>& records, const SchemeConfig& scheme);

}  // namespace hyperadapters
