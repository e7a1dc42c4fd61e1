#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperadapters/corpus.hpp"
#include "hyperadapters/trainer.hpp"

namespace hyperadapters {

/// One adapter-swap probe: evaluate `language` with the adapters of a
/// related and of a distant language.
struct SwapProbe {
  std::string language;
  std::string related;
  std::string distant;
  bool operator==(const SwapProbe&) const = default;
};

/// Encoder and decoder masking policies of one zero-shot variant.
struct MaskVariant {
  MaskPolicy enc;
  MaskPolicy dec;
  double dropout = 0.0;
  std::string str() const;
  /// "s,t|t" or "s|t@0.1" (trailing hyper-network dropout).
  static MaskVariant parse(const std::string& text);
  bool operator==(const MaskVariant&) const = default;
};

struct ProbeConfig {
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> d_h{64, 256, 1024};
  std::vector<bool> rescale{true, false};
  /// Trailing records averaged for "final" loss and activation SD.
  int final_window = 20;
  double divergence_sd = 1e3;
  std::vector<SwapProbe> swaps;
  std::vector<SchemeKind> schemes{SchemeKind::Language, SchemeKind::Hyper};
  std::map<std::string, int> fragments;
  std::vector<MaskVariant> masks;
};

struct ExperimentConfig {
  /// Read the corpus from here instead of generating it.
  std::optional<std::filesystem::path> corpus_path;
  LanguageFamilySpec corpus;
  /// Applied after generation or loading.
  std::map<std::string, int> fragments;
  ModelConfig model;
  SchemeConfig scheme;
  TrainConfig train;
  ProbeConfig probe;
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 1;

  /// Keeps train.seed equal to the run seed.
  void validate() const;
  /// Canonical sectioned key=value text. Parsing it back gives an equal
  /// config, and the text of an equal config is byte-identical.
  std::string to_ini() const;
  static ExperimentConfig from_ini(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Hash of to_ini() without the output directory.
  std::string hash() const;

  /// Overrides one key, e.g. ("train.steps", "10").
  void set(const std::string& key, const std::string& value);
};

/// Generates (or reads) the corpus and applies fragmentation.
Corpus materialize_corpus(const ExperimentConfig& config);
std::string manifest_hash(const Corpus& corpus);

std::string format_double(double v);

}  // namespace hyperadapters
