#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperadapters/transformer.hpp"

namespace hyperadapters {

struct LanguageSpec {
  std::string name;
  std::optional<std::string> parent;
  /// Fraction of cipher entries copied from the parent. Ignored for roots.
  double relatedness = 0.0;
  int sentences = 0;
  /// Swap each adjacent token pair after enciphering.
  bool reorder = false;
};

struct LanguageFamilySpec {
  int concept_vocab = 32;
  /// Surface symbols shared by all languages; 0 means concept_vocab. A
  /// larger inventory lets unrelated languages use partly disjoint words.
  int surface_vocab = 0;
  std::string pivot;
  std::vector<LanguageSpec> languages;
  int min_length = 3;
  int max_length = 8;
  int valid_sentences = 50;
  int test_sentences = 50;
  /// Held-out sentences per ordered non-pivot pair.
  int zero_shot_sentences = 0;
  double max_length_ratio = 2.5;
  int max_tokens = 250;

  int surface_size() const { return surface_vocab > 0 ? surface_vocab : concept_vocab; }
  void validate() const;
};

struct LanguageInfo {
  std::string name;
  std::vector<int> cipher;  // concept -> surface symbol, injective
  std::optional<std::string> parent;
  double relatedness = 0.0;
  bool reorder = false;
  std::string family;  // root ancestor
  std::string origin;  // language a fragment was split from, else itself
};

struct ParallelPair {
  LanguagePair pair;
  std::vector<int> source;  // surface symbols
  std::vector<int> target;
  int sentence = 0;         // id shared by both directions of one sentence
};

struct Corpus {
  int n_symbols = 0;
  LangId pivot = 0;
  std::vector<LanguageInfo> languages;
  std::vector<ParallelPair> train, valid, test, zero_shot;
  std::map<std::string, std::vector<std::string>> fragments;
  std::size_t filtered = 0;

  int n_languages() const { return static_cast<int>(languages.size()); }
  LangId id_of(const std::string& name) const;
  Vocabulary vocabulary() const { return {n_languages(), n_symbols}; }
  Example to_example(const ParallelPair& p) const;
  std::vector<Example> to_examples(std::span<const ParallelPair> pairs) const;
  /// Sentences per training direction.
  std::map<LanguagePair, std::size_t> direction_sizes() const;
};

std::vector<int> encipher(const LanguageInfo& lang, std::span<const int> concepts);
std::vector<int> decipher(const LanguageInfo& lang, std::span<const int> symbols);
/// Fraction of concepts mapped to the same symbol by both ciphers.
double cipher_overlap(const std::vector<int>& a, const std::vector<int>& b);
/// Inverse source cipher then target cipher reproduces the target.
bool satisfies_cipher(const Corpus& corpus, const ParallelPair& p);

Corpus generate_corpus(const LanguageFamilySpec& spec, std::uint64_t seed);

/// Splits each named language into `k` languages "<name>#1".."<name>#k" that
/// share its cipher and partition its sentences uniformly at random.
Corpus fragment(const Corpus& corpus, const std::map<std::string, int>& splits, std::uint64_t seed);

/// p_i proportional to size_i^(1/T).
std::vector<double> temperature_distribution(std::span<const double> sizes, double temperature);

/// Draws token-budgeted batches of training directions under temperature
/// sampling. Reproducible for a fixed rng state.
class BatchSampler {
 public:
  BatchSampler(const Corpus& corpus, std::span<const ParallelPair> pairs, double temperature, std::size_t token_budget);

  const std::vector<LanguagePair>& directions() const { return directions_; }
  const std::vector<double>& probabilities() const { return probs_; }
  /// Items sorted by direction; total tagged tokens never exceed the budget.
  std::vector<Example> next(Rng& rng) const;

 private:
  const Corpus& corpus_;
  std::vector<LanguagePair> directions_;
  std::vector<std::vector<const ParallelPair*>> members_;
  std::vector<double> probs_;
  std::size_t budget_;
};

/// Tagged tokens an example occupies in a batch: [tag, x, eos] + [y, eos].
std::size_t tagged_tokens(const ParallelPair& p);

/// Manifest JSON: languages with ciphers and their hashes, relatedness graph,
/// fragments and per-split direction counts.
std::string corpus_manifest(const Corpus& corpus);

/// Writes train/valid/test/zeroshot .tsv files plus manifest.json. Each line
/// is src-lang TAB tgt-lang TAB src-tokens TAB tgt-tokens TAB sentence-id.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace hyperadapters
