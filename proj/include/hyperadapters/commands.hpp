#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "hyperadapters/probes.hpp"

namespace hyperadapters {

/// Exit statuses shared by the commands.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUsage = 2, kExitFailed = 3 };

/// Writes the corpus files and manifest to `out`; prints per-language counts.
int cmd_gen_data(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Trains into `run_dir`: config.ini, metrics.jsonl, best.ckpt (if any
/// validation ran), last.ckpt and summary.json. Refuses an existing
/// directory unless `force`. The corpus is resolved before anything is
/// written. Returns kExitFailed on divergence.
int cmd_train(const ExperimentConfig& config, const std::filesystem::path& run_dir, bool force, std::ostream& log);

/// Loads a run directory written by cmd_train: its config, corpus and best
/// (or last) parameters.
struct LoadedRun {
  ExperimentConfig config;
  Corpus corpus;
  std::unique_ptr<AdaptedModel> system;
};
LoadedRun load_run(const std::filesystem::path& run_dir);

/// stability | audit | convergence | swap | redundancy | embeddings | zeroshot.
/// Reports go under `out_dir`. `run_dir` supplies a trained model for swap
/// and embeddings. Returns kExitFailed when audit finds a mismatch.
int cmd_probe(const std::string& name, const ExperimentConfig& config,
              const std::optional<std::filesystem::path>& run_dir, const std::filesystem::path& out_dir,
              std::ostream& log);

/// Closed-form count (and, with `enumerate`, an instantiated audit).
int cmd_audit_params(const CountQuery& query, bool enumerate, std::ostream& log);

/// CountQuery describing a model's adapter scheme.
CountQuery count_query(const AdaptedModel& system);

}  // namespace hyperadapters
