#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperadapters/config.hpp"

namespace hyperadapters {

/// Config hash, corpus manifest hash and seed(s) behind a report.
struct Provenance {
  std::string config_hash;
  std::string manifest_hash;
  std::vector<std::uint64_t> seeds;
  nlohmann::json to_json() const;
};
Provenance provenance_of(const ExperimentConfig& config, const Corpus& corpus);

/// Trains a fresh model with `scheme` under `seed` (model init and training).
struct TrainedModel {
  std::unique_ptr<AdaptedModel> system;
  TrainResult result;
};
TrainedModel train_scheme(const Corpus& corpus, const ExperimentConfig& config, const SchemeConfig& scheme,
                          std::uint64_t seed);

/// Fraction of reference positions reproduced, over the longer of the two.
double sequence_token_accuracy(const std::vector<int>& hypothesis, const std::vector<int>& reference);
/// Greedy-decoded token accuracy averaged over examples.
double decode_accuracy(const AdaptedModel& system, std::span<const Example> examples, AdapterProvider* adapters);

/// Mean of the last `window` entries.
double tail_mean(const std::vector<double>& values, int window);

// ---------------------------------------------------------------- stability

struct StabilityRun {
  int d_h = 0;
  bool rescale = true;
  std::uint64_t seed = 0;
  std::vector<double> loss;
  std::vector<double> max_act_sd;  // max over layers, per step
  bool diverged = false;
  std::optional<int> diverged_at;
};

struct StabilityReport {
  std::vector<StabilityRun> runs;
  int final_window = 20;
  double divergence_sd = 1e3;

  /// Seed-averaged trailing-window statistics for one configuration.
  double final_loss(int d_h, bool rescale) const;
  double final_max_sd(int d_h, bool rescale) const;
  std::string csv() const;
  nlohmann::json summary() const;
};

/// One run per (d_h, rescale, seed) on the same data, hyper scheme.
StabilityReport stability_sweep(const Corpus& corpus, const ExperimentConfig& config);

// -------------------------------------------------------------- convergence

struct ConvergenceCurve {
  std::string label;
  SchemeConfig scheme;
  std::size_t extra_params = 0;
  std::vector<int> steps;
  std::vector<double> val_loss;  // seed-averaged
  double best = std::numeric_limits<double>::infinity();
  int best_step = 0;
  /// First evaluation step at or below the reference; nullopt never crosses.
  std::optional<int> crossing;
};

struct ConvergenceReport {
  double reference = 0.0;
  std::string reference_label;
  std::vector<ConvergenceCurve> curves;
  std::string csv() const;
  nlohmann::json summary() const;
};

/// `schemes[0]` defines the reference: its best seed-averaged validation loss.
/// Throws if extra-parameter counts differ by more than `tolerance`.
ConvergenceReport convergence_compare(const Corpus& corpus, const ExperimentConfig& config,
                                      const std::vector<std::pair<std::string, SchemeConfig>>& schemes,
                                      double tolerance = 0.05);

/// Hidden size whose hyper-network count is closest to `target` extra
/// parameters.
int matched_hidden(const ExperimentConfig& config, int n_languages, std::size_t target);

// --------------------------------------------------------------------- swap

struct SwapRow {
  SwapProbe probe;
  double org = 0.0, sim = 0.0, dist = 0.0;
  double acc() const { return org > 0.0 ? sim / org : 0.0; }
};

struct SwapReport {
  std::string scheme;
  std::vector<SwapRow> rows;
  double mean_acc() const;
  std::string csv() const;
  nlohmann::json summary() const;
};

/// Token accuracy on the language->pivot test pairs with the source routed to
/// the original, the related and the distant language.
SwapReport adapter_swap_eval(const AdaptedModel& system, const Corpus& corpus, const std::vector<SwapProbe>& probes);

// --------------------------------------------------------------- redundancy

struct RedundancyRow {
  std::string scheme;
  double original = 0.0;    // seed-averaged best validation loss
  double fragmented = 0.0;
  double original_acc = 0.0;
  double fragmented_acc = 0.0;
  double delta() const { return fragmented - original; }
};

struct RedundancyReport {
  std::vector<RedundancyRow> rows;
  const RedundancyRow& row(SchemeKind kind) const;
  std::string csv() const;
  nlohmann::json summary() const;
};

RedundancyReport redundancy_experiment(const Corpus& original, const Corpus& fragmented, const ExperimentConfig& config);

// --------------------------------------------------------------- embeddings

struct RelatednessReport {
  std::vector<std::string> names;
  std::vector<std::string> groups;
  std::vector<std::vector<double>> cosine;
  double within = 0.0;
  double between = 0.0;
  double gap() const { return within - between; }
  /// Mean within-group cosine of each group with at least two members.
  std::map<std::string, double> group_within;
  std::string csv() const;
  nlohmann::json summary() const;
};

/// Cosine statistics over embedding rows. Pairs sharing a group label count
/// as within, others as between.
RelatednessReport embedding_relatedness(const Tensor& embeddings, const std::vector<std::string>& names,
                                        const std::vector<std::string>& groups);
/// Groups are root families, or origins when the corpus has fragments.
RelatednessReport embedding_relatedness(const HyperNetwork& net, const Corpus& corpus, bool by_origin = false);

// ----------------------------------------------------------------- zero-shot

struct ZeroShotRow {
  std::string variant;
  bool applicable = true;
  double direct = 0.0;      // X->Y greedy token accuracy, seed-averaged
  double pivot = 0.0;       // X->pivot->Y
  double supervised = 0.0;  // pivot-centric test pairs
};

struct ZeroShotReport {
  std::vector<ZeroShotRow> rows;
  const ZeroShotRow& row(const std::string& variant) const;
  std::string csv() const;
  nlohmann::json summary() const;
};

/// Hyper scheme under each masking variant, plus the pair scheme reported
/// as not applicable for direct translation.
ZeroShotReport zero_shot_eval(const Corpus& corpus, const ExperimentConfig& config);

// ------------------------------------------------------------------- output

/// Writes <dir>/<probe>-<config hash>/{<probe>.csv, summary.json}. Returns
/// the directory.
std::filesystem::path write_probe_report(const std::filesystem::path& dir, const std::string& probe,
                                         const Provenance& provenance, const std::string& csv,
                                         nlohmann::json summary);

}  // namespace hyperadapters
