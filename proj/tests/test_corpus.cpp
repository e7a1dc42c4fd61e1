#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "hyperadapters/corpus.hpp"

namespace ha = hyperadapters;
using ha::Corpus;
using ha::LanguageFamilySpec;

namespace {

LanguageFamilySpec family_spec() {
  LanguageFamilySpec s;
  s.concept_vocab = 40;
  s.pivot = "en";
  s.languages = {{"en", {}, 0.0, 0}, {"de", {}, 0.0, 120}, {"nl", "de", 0.9, 80}, {"fr", {}, 0.0, 100}};
  s.valid_sentences = 10;
  s.test_sentences = 10;
  s.zero_shot_sentences = 5;
  return s;
}

std::vector<ha::ParallelPair> of_language(const Corpus& c, const std::vector<ha::ParallelPair>& data, ha::LangId l) {
  std::vector<ha::ParallelPair> out;
  for (const auto& p : data)
    if (p.pair.source == l || p.pair.target == l) out.push_back(p);
  return out;
}

bool same_pairs(const std::vector<ha::ParallelPair>& a, const std::vector<ha::ParallelPair>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].pair != b[i].pair || a[i].source != b[i].source || a[i].target != b[i].target ||
        a[i].sentence != b[i].sentence)
      return false;
  }
  return true;
}

}  // namespace

TEST(Generate, CountsAreVerbatimAndPivotCentric) {
  auto c = ha::generate_corpus(family_spec(), 1);
  const auto en = c.id_of("en");
  auto sizes = c.direction_sizes();
  EXPECT_EQ(sizes.size(), 6u);
  EXPECT_EQ((sizes[{c.id_of("de"), en}]), 120u);
  EXPECT_EQ((sizes[{en, c.id_of("nl")}]), 80u);
  for (const auto& p : c.train) EXPECT_TRUE(p.pair.source == en || p.pair.target == en);
  for (const auto& p : c.zero_shot) {
    EXPECT_NE(p.pair.source, en);
    EXPECT_NE(p.pair.target, en);
  }
  EXPECT_EQ(c.zero_shot.size(), 6u * 5u);
}

TEST(Generate, EveryPairSatisfiesCipherRelation) {
  auto spec = family_spec();
  spec.languages[3].reorder = true;
  auto c = ha::generate_corpus(spec, 2);
  for (const auto* data : {&c.train, &c.valid, &c.test, &c.zero_shot})
    for (const auto& p : *data) ASSERT_TRUE(ha::satisfies_cipher(c, p));
}

TEST(Generate, CiphersAreBijections) {
  auto c = ha::generate_corpus(family_spec(), 3);
  for (const auto& l : c.languages) {
    std::set<int> image(l.cipher.begin(), l.cipher.end());
    EXPECT_EQ(image.size(), 40u);
    EXPECT_EQ(*image.begin(), 0);
    EXPECT_EQ(*image.rbegin(), 39);
  }
}

TEST(Generate, RelatednessMatchesSharedEntries) {
  for (double r : {0.25, 0.5, 0.9, 0.975, 1.0}) {
    auto spec = family_spec();
    spec.languages[2].relatedness = r;
    auto c = ha::generate_corpus(spec, 4);
    const double measured = ha::cipher_overlap(c.languages[2].cipher, c.languages[1].cipher);
    EXPECT_LE(std::abs(measured - r), 1.0 / 40 + 1e-12) << r;
  }
}

TEST(Generate, UnrelatedCipherOverlapIsAboutOneOverVocab) {
  double total = 0.0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    auto spec = family_spec();
    spec.languages[2].relatedness = 0.0;
    auto c = ha::generate_corpus(spec, 100 + t);
    total += ha::cipher_overlap(c.languages[2].cipher, c.languages[1].cipher);
  }
  // Fixed points of a random permutation: mean 1, variance 1.
  EXPECT_NEAR(total / trials, 1.0 / 40, 3.0 / 40 / std::sqrt(trials));
}

TEST(Generate, IdenticalCipherChildMirrorsParent) {
  auto spec = family_spec();
  spec.languages[2].relatedness = 1.0;
  auto c = ha::generate_corpus(spec, 5);
  EXPECT_EQ(c.languages[2].cipher, c.languages[1].cipher);
  EXPECT_EQ(c.languages[2].family, "de");
}

TEST(Generate, SeedReproducesBitwise) {
  auto a = ha::generate_corpus(family_spec(), 6), b = ha::generate_corpus(family_spec(), 6);
  EXPECT_TRUE(same_pairs(a.train, b.train));
  EXPECT_EQ(ha::corpus_manifest(a), ha::corpus_manifest(b));
  auto c = ha::generate_corpus(family_spec(), 7);
  EXPECT_FALSE(same_pairs(a.train, c.train));
}

TEST(Generate, InvalidSpecsThrow) {
  auto s = family_spec();
  s.pivot = "xx";
  EXPECT_THROW(ha::generate_corpus(s, 1), std::invalid_argument);
  s = family_spec();
  s.languages[2].parent = "zz";
  EXPECT_THROW(ha::generate_corpus(s, 1), std::invalid_argument);
  s = family_spec();
  s.concept_vocab = 2;  // two permutations cannot serve four languages
  EXPECT_THROW(ha::generate_corpus(s, 1), std::invalid_argument);
}

TEST(Generate, LengthFiltersDropPairs) {
  auto s = family_spec();
  s.max_tokens = 5;
  auto c = ha::generate_corpus(s, 8);
  EXPECT_GT(c.filtered, 0u);
  for (const auto& p : c.train) EXPECT_LE(p.source.size(), 5u);
}

TEST(SurfaceVocab, CiphersAreInjectiveIntoTheLargerInventory) {
  auto s = family_spec();
  s.surface_vocab = 100;
  auto c = ha::generate_corpus(s, 8);
  EXPECT_EQ(c.n_symbols, 100);
  for (const auto& l : c.languages) {
    ASSERT_EQ(l.cipher.size(), 40u);
    std::set<int> image(l.cipher.begin(), l.cipher.end());
    EXPECT_EQ(image.size(), 40u) << l.name;
    EXPECT_LT(*image.rbegin(), 100);
  }
  for (const auto& p : c.train) EXPECT_TRUE(ha::satisfies_cipher(c, p));
}

TEST(SurfaceVocab, ChildChangesExactlyTheUnsharedEntries) {
  auto s = family_spec();
  s.surface_vocab = 60;
  s.languages[2].relatedness = 0.975;  // one entry of forty changes
  auto c = ha::generate_corpus(s, 9);
  EXPECT_DOUBLE_EQ(ha::cipher_overlap(c.languages[1].cipher, c.languages[2].cipher), 39.0 / 40.0);
  s.languages[2].relatedness = 0.5;
  c = ha::generate_corpus(s, 9);
  EXPECT_DOUBLE_EQ(ha::cipher_overlap(c.languages[1].cipher, c.languages[2].cipher), 0.5);
}

TEST(SurfaceVocab, UnrelatedLanguagesShareFewSymbols) {
  auto s = family_spec();
  s.surface_vocab = 400;
  auto c = ha::generate_corpus(s, 10);
  const auto& de = c.languages[1].cipher;
  const auto& fr = c.languages[3].cipher;
  std::set<int> a(de.begin(), de.end());
  int shared = 0;
  for (int x : fr) shared += a.count(x);
  // Expected 40 * 40 / 400 = 4.
  EXPECT_LT(shared, 12);
}

TEST(SurfaceVocab, SmallerThanConceptsThrows) {
  auto s = family_spec();
  s.surface_vocab = 39;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Fragment, FiveSplitsPartitionExactly) {
  auto s = family_spec();
  s.languages[1].sentences = 1000;
  auto c = ha::generate_corpus(s, 9);
  auto f = ha::fragment(c, {{"de", 5}}, 10);
  ASSERT_EQ(f.fragments.at("de").size(), 5u);
  std::set<int> seen;
  for (int k = 1; k <= 5; ++k) {
    const auto id = f.id_of("de#" + std::to_string(k));
    EXPECT_EQ(f.languages[static_cast<std::size_t>(id)].cipher, c.languages[1].cipher);
    EXPECT_EQ(f.languages[static_cast<std::size_t>(id)].origin, "de");
    auto part = of_language(f, f.train, id);
    EXPECT_EQ(part.size(), 2u * 200u);
    for (const auto& p : part) seen.insert(p.sentence);
  }
  EXPECT_EQ(seen.size(), 1000u);
  for (const auto& p : f.train) ASSERT_TRUE(ha::satisfies_cipher(f, p));
}

TEST(Fragment, OneSplitIsRenaming) {
  auto c = ha::generate_corpus(family_spec(), 11);
  auto f = ha::fragment(c, {{"fr", 1}}, 12);
  ASSERT_EQ(f.train.size(), c.train.size());
  for (std::size_t i = 0; i < c.train.size(); ++i) {
    EXPECT_EQ(f.train[i].source, c.train[i].source);
    EXPECT_EQ(f.languages[static_cast<std::size_t>(f.train[i].pair.source)].origin,
              c.languages[static_cast<std::size_t>(c.train[i].pair.source)].name);
  }
}

TEST(Fragment, PreservesTokenDistribution) {
  auto c = ha::generate_corpus(family_spec(), 13);
  auto f = ha::fragment(c, {{"de", 3}, {"fr", 2}}, 14);
  std::map<std::pair<std::string, int>, int> before, after;
  for (const auto& p : c.train) for (int t : p.source) ++before[{c.languages[p.pair.source].origin, t}];
  for (const auto& p : f.train) for (int t : p.source) ++after[{f.languages[p.pair.source].origin, t}];
  EXPECT_EQ(before, after);
}

TEST(Fragment, RejectsTooManySplitsAndPivot) {
  auto c = ha::generate_corpus(family_spec(), 15);
  EXPECT_THROW(ha::fragment(c, {{"nl", 81}}, 1), std::invalid_argument);
  EXPECT_THROW(ha::fragment(c, {{"en", 2}}, 1), std::invalid_argument);
}

TEST(Temperature, ClosedFormCases) {
  std::vector<double> sizes{80, 20};
  auto p = ha::temperature_distribution(sizes, 2.0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  auto raw = ha::temperature_distribution(sizes, 1.0);
  EXPECT_NEAR(raw[0], 0.8, 1e-15);
  std::vector<double> many{1, 10, 1000, 5};
  auto flat = ha::temperature_distribution(many, 1e6);
  double sum = 0.0;
  for (double v : flat) {
    EXPECT_NEAR(v, 0.25, 1e-3);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_THROW(ha::temperature_distribution(std::vector<double>{}, 2.0), std::invalid_argument);
  EXPECT_THROW(ha::temperature_distribution(sizes, 0.5), std::invalid_argument);
}

TEST(Sampler, RespectsBudgetAndTags) {
  auto c = ha::generate_corpus(family_spec(), 16);
  ha::BatchSampler sampler(c, c.train, 2.0, 120);
  ha::Rng rng(1);
  const auto vocab = c.vocabulary();
  for (int i = 0; i < 50; ++i) {
    auto ex = sampler.next(rng);
    ASSERT_FALSE(ex.empty());
    auto batch = ha::make_batch(ex, vocab);
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < batch.size; ++b) {
      EXPECT_TRUE(vocab.is_tag(static_cast<int>(batch.src[b * batch.src_len])));
      tokens += batch.src_lengths[b] + batch.tgt_lengths[b];
    }
    EXPECT_LE(tokens, 120u);
    for (std::size_t b = 1; b < ex.size(); ++b) EXPECT_LE(ex[b - 1].pair, ex[b].pair);
  }
  EXPECT_THROW(ha::BatchSampler(c, c.train, 2.0, 4), std::invalid_argument);
}

TEST(Sampler, ConcentratedDistributionUsesOnePair) {
  auto c = ha::generate_corpus(family_spec(), 17);
  std::vector<ha::ParallelPair> only;
  for (const auto& p : c.train)
    if (p.pair == ha::LanguagePair{c.id_of("fr"), c.pivot}) only.push_back(p);
  ha::BatchSampler sampler(c, only, 2.0, 200);
  ha::Rng rng(2);
  for (const auto& e : sampler.next(rng)) EXPECT_EQ(e.pair, (ha::LanguagePair{c.id_of("fr"), c.pivot}));
}

TEST(Sampler, FrequenciesMatchDistribution) {
  auto c = ha::generate_corpus(family_spec(), 18);
  ha::BatchSampler sampler(c, c.train, 2.0, 60);
  ha::Rng rng(3);
  std::map<ha::LanguagePair, double> counts;
  double total = 0.0;
  for (int i = 0; i < 10000; ++i)
    for (const auto& e : sampler.next(rng)) {
      counts[e.pair] += 1.0;
      total += 1.0;
    }
  for (std::size_t d = 0; d < sampler.directions().size(); ++d) {
    const double p = sampler.probabilities()[d];
    const double sd = std::sqrt(p * (1 - p) / total);
    EXPECT_NEAR(counts[sampler.directions()[d]] / total, p, 3 * sd);
  }
}

TEST(Sampler, ReproducibleUnderSeed) {
  auto c = ha::generate_corpus(family_spec(), 19);
  ha::BatchSampler sampler(c, c.train, 2.0, 100);
  ha::Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) {
    auto x = sampler.next(a), y = sampler.next(b);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_EQ(x[k].source, y[k].source);
  }
}

TEST(Files, RoundTripThroughDisk) {
  auto c = ha::fragment(ha::generate_corpus(family_spec(), 20), {{"de", 2}}, 21);
  const auto dir = std::filesystem::temp_directory_path() / "ha_corpus_test";
  std::filesystem::remove_all(dir);
  ha::write_corpus(c, dir);
  auto back = ha::read_corpus(dir);
  EXPECT_TRUE(same_pairs(c.train, back.train));
  EXPECT_TRUE(same_pairs(c.valid, back.valid));
  EXPECT_EQ(ha::corpus_manifest(c), ha::corpus_manifest(back));
  std::ifstream line_check(dir / "train.tsv");
  std::string first;
  std::getline(line_check, first);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\t'), 4);
  std::filesystem::remove_all(dir);
}

TEST(Files, RoundTripWithSurfaceInventory) {
  auto s = family_spec();
  s.surface_vocab = 70;
  auto c = ha::generate_corpus(s, 22);
  const auto dir = std::filesystem::temp_directory_path() / "ha_corpus_surface_test";
  std::filesystem::remove_all(dir);
  ha::write_corpus(c, dir);
  auto back = ha::read_corpus(dir);
  EXPECT_EQ(back.n_symbols, 70);
  EXPECT_TRUE(same_pairs(c.zero_shot, back.zero_shot));
  EXPECT_EQ(ha::corpus_manifest(c), ha::corpus_manifest(back));
  std::filesystem::remove_all(dir);
}
