#include "hyperadapters/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace hyperadapters {

using nlohmann::json;

void LanguageFamilySpec::validate() const {
  if (concept_vocab < 2) throw std::invalid_argument("concept vocabulary needs at least 2 symbols");
  if (languages.empty()) throw std::invalid_argument("corpus spec lists no languages");
  if (min_length < 1 || max_length < min_length) throw std::invalid_argument("bad sentence length range");
  if (valid_sentences < 0 || test_sentences < 0 || zero_shot_sentences < 0) {
    throw std::invalid_argument("held-out sentence counts must be non-negative");
  }
  std::set<std::string> names;
  for (const auto& l : languages) {
    if (l.name.empty() || l.name.find_first_of("\t #,") != std::string::npos) {
      throw std::invalid_argument("invalid language name '" + l.name + "'");
    }
    if (!names.insert(l.name).second) throw std::invalid_argument("duplicate language " + l.name);
    if (l.relatedness < 0.0 || l.relatedness > 1.0) throw std::invalid_argument("relatedness outside [0,1] for " + l.name);
    if (l.sentences < 0) throw std::invalid_argument("negative sentence count for " + l.name);
  }
  for (const auto& l : languages) {
    if (l.parent && !names.count(*l.parent)) throw std::invalid_argument(l.name + " has unknown parent " + *l.parent);
  }
  if (!names.count(pivot)) throw std::invalid_argument("pivot language '" + pivot + "' is not listed");
  if (surface_vocab != 0 && surface_vocab < concept_vocab) {
    throw std::invalid_argument("surface vocabulary smaller than the concept vocabulary");
  }
  // Distinct ciphers need distinct permutations: at most V! of them.
  double log_perms = std::lgamma(concept_vocab + 1.0);
  if (std::log(static_cast<double>(languages.size())) > log_perms) {
    throw std::invalid_argument("concept vocabulary too small for " + std::to_string(languages.size()) + " ciphers");
  }
}

LangId Corpus::id_of(const std::string& name) const {
  for (std::size_t i = 0; i < languages.size(); ++i)
    if (languages[i].name == name) return static_cast<LangId>(i);
  throw std::invalid_argument("unknown language '" + name + "'");
}

Example Corpus::to_example(const ParallelPair& p) const {
  const auto vocab = vocabulary();
  Example e{p.pair, {}, {}};
  for (int s : p.source) e.source.push_back(vocab.symbol(s));
  for (int s : p.target) e.target.push_back(vocab.symbol(s));
  return e;
}

std::vector<Example> Corpus::to_examples(std::span<const ParallelPair> pairs) const {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(to_example(p));
  return out;
}

std::map<LanguagePair, std::size_t> Corpus::direction_sizes() const {
  std::map<LanguagePair, std::size_t> out;
  for (const auto& p : train) ++out[p.pair];
  return out;
}

std::vector<int> encipher(const LanguageInfo& lang, std::span<const int> concepts) {
  std::vector<int> out;
  out.reserve(concepts.size());
  for (int c : concepts) out.push_back(lang.cipher.at(static_cast<std::size_t>(c)));
  if (lang.reorder)
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  return out;
}

std::vector<int> decipher(const LanguageInfo& lang, std::span<const int> symbols) {
  const int top = lang.cipher.empty() ? 0 : *std::max_element(lang.cipher.begin(), lang.cipher.end());
  std::vector<int> inverse(static_cast<std::size_t>(top + 1), -1);
  for (std::size_t c = 0; c < lang.cipher.size(); ++c) inverse[static_cast<std::size_t>(lang.cipher[c])] = static_cast<int>(c);
  std::vector<int> out(symbols.begin(), symbols.end());
  if (lang.reorder)
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  for (auto& s : out) {
    if (s < 0 || s > top || inverse[static_cast<std::size_t>(s)] < 0) throw std::invalid_argument("symbol outside the cipher");
    s = inverse[static_cast<std::size_t>(s)];
  }
  return out;
}

double cipher_overlap(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("ciphers differ in size");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

bool satisfies_cipher(const Corpus& corpus, const ParallelPair& p) {
  const auto& src = corpus.languages.at(static_cast<std::size_t>(p.pair.source));
  const auto& tgt = corpus.languages.at(static_cast<std::size_t>(p.pair.target));
  return encipher(tgt, decipher(src, p.source)) == p.target;
}

namespace {

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

std::vector<int> random_injection(int concepts, int symbols, Rng& rng) {
  auto p = random_permutation(symbols, rng);
  p.resize(static_cast<std::size_t>(concepts));
  return p;
}

// Copies the parent cipher and changes round((1 - r) V) entries. With no
// spare symbols the changed entries rotate along a random cycle; a single
// entry cannot move alone in a bijection, so one becomes two. With spare
// symbols each changed entry takes a fresh symbol unused by the kept ones.
std::vector<int> derive_cipher(const std::vector<int>& parent, int symbols, double relatedness, Rng& rng) {
  const int V = static_cast<int>(parent.size());
  if (relatedness <= 0.0) return random_injection(V, symbols, rng);
  int k = static_cast<int>(std::lround((1.0 - relatedness) * V));
  if (k == 1 && symbols == V) k = 2;
  auto positions = random_permutation(V, rng);
  positions.resize(static_cast<std::size_t>(k));
  auto child = parent;
  if (symbols == V) {
    for (int i = 0; i < k; ++i) {
      child[static_cast<std::size_t>(positions[static_cast<std::size_t>(i)])] =
          parent[static_cast<std::size_t>(positions[static_cast<std::size_t>((i + 1) % k)])];
    }
    return child;
  }
  std::vector<bool> kept(static_cast<std::size_t>(symbols), false);
  for (int c : parent) kept[static_cast<std::size_t>(c)] = true;
  for (int pos : positions) kept[static_cast<std::size_t>(parent[static_cast<std::size_t>(pos)])] = false;
  std::vector<int> pool;
  for (int s = 0; s < symbols; ++s)
    if (!kept[static_cast<std::size_t>(s)]) pool.push_back(s);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (int pos : positions) {
    const int old = parent[static_cast<std::size_t>(pos)];
    auto it = std::find_if(pool.begin(), pool.end(), [&](int s) { return s != old; });
    child[static_cast<std::size_t>(pos)] = *it;
    pool.erase(it);
  }
  return child;
}

std::vector<int> random_sentence(const LanguageFamilySpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> len(spec.min_length, spec.max_length), sym(0, spec.concept_vocab - 1);
  std::vector<int> out(static_cast<std::size_t>(len(rng)));
  for (auto& c : out) c = sym(rng);
  return out;
}

bool keep(const LanguageFamilySpec& spec, const std::vector<int>& a, const std::vector<int>& b) {
  const auto n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  if (a.size() > static_cast<std::size_t>(spec.max_tokens) || b.size() > static_cast<std::size_t>(spec.max_tokens)) return false;
  return std::max(n, m) <= spec.max_length_ratio * std::min(n, m);
}

std::string cipher_hash(const std::vector<int>& cipher) {
  std::string bytes;
  for (int c : cipher) bytes += std::to_string(c) + ",";
  std::ostringstream hex;
  hex << std::hex << fnv1a(bytes);
  return hex.str();
}

}  // namespace

Corpus generate_corpus(const LanguageFamilySpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus corpus;
  corpus.n_symbols = spec.surface_size();

  // Parents first, so children can copy a finished cipher.
  std::map<std::string, const LanguageSpec*> by_name;
  for (const auto& l : spec.languages) by_name[l.name] = &l;
  std::map<std::string, std::vector<int>> ciphers;
  std::set<std::string> visiting;
  std::function<void(const LanguageSpec&)> build = [&](const LanguageSpec& l) {
    if (ciphers.count(l.name)) return;
    if (!visiting.insert(l.name).second) throw std::invalid_argument("parent cycle through " + l.name);
    auto rng = make_rng(seed, "corpus.cipher." + l.name);
    if (l.parent) {
      build(*by_name.at(*l.parent));
      ciphers[l.name] = derive_cipher(ciphers.at(*l.parent), spec.surface_size(), l.relatedness, rng);
    } else {
      ciphers[l.name] = random_injection(spec.concept_vocab, spec.surface_size(), rng);
    }
  };
  for (const auto& l : spec.languages) build(l);

  for (const auto& l : spec.languages) {
    LanguageInfo info{l.name, ciphers.at(l.name), l.parent, l.parent ? l.relatedness : 0.0, l.reorder, l.name, l.name};
    for (const LanguageSpec* a = &l; a->parent;) {
      a = by_name.at(*a->parent);
      info.family = a->name;
    }
    corpus.languages.push_back(std::move(info));
  }
  corpus.pivot = corpus.id_of(spec.pivot);

  auto emit = [&](std::vector<ParallelPair>& out, LangId a, LangId b, const std::vector<int>& concepts, int id,
                  bool both) -> bool {
    auto sa = encipher(corpus.languages[static_cast<std::size_t>(a)], concepts);
    auto sb = encipher(corpus.languages[static_cast<std::size_t>(b)], concepts);
    if (!keep(spec, sa, sb)) {
      corpus.filtered += both ? 2 : 1;
      return false;
    }
    out.push_back({{a, b}, sa, sb, id});
    if (both) out.push_back({{b, a}, sb, sa, id});
    return true;
  };

  for (LangId x = 0; x < corpus.n_languages(); ++x) {
    if (x == corpus.pivot) continue;
    const auto& l = spec.languages[static_cast<std::size_t>(x)];
    auto rng = make_rng(seed, "corpus.sentences." + l.name);
    // Ids count kept sentences per split, the order a reader recovers them in.
    auto fill = [&](std::vector<ParallelPair>& out, int n) {
      int id = 0;
      for (int i = 0; i < n; ++i) id += emit(out, x, corpus.pivot, random_sentence(spec, rng), id, true);
    };
    fill(corpus.train, l.sentences);
    fill(corpus.valid, spec.valid_sentences);
    fill(corpus.test, spec.test_sentences);
  }
  if (spec.zero_shot_sentences > 0) {
    for (LangId x = 0; x < corpus.n_languages(); ++x) {
      for (LangId y = 0; y < corpus.n_languages(); ++y) {
        if (x == y || x == corpus.pivot || y == corpus.pivot) continue;
        auto rng = make_rng(seed, "corpus.zeroshot." + corpus.languages[static_cast<std::size_t>(x)].name + ">" +
                                      corpus.languages[static_cast<std::size_t>(y)].name);
        for (int i = 0; i < spec.zero_shot_sentences; ++i) emit(corpus.zero_shot, x, y, random_sentence(spec, rng), i, false);
      }
    }
  }
  return corpus;
}

Corpus fragment(const Corpus& corpus, const std::map<std::string, int>& splits, std::uint64_t seed) {
  Corpus out;
  out.n_symbols = corpus.n_symbols;
  out.filtered = corpus.filtered;
  for (const auto& [name, k] : splits) {
    const LangId id = corpus.id_of(name);
    if (id == corpus.pivot) throw std::invalid_argument("cannot fragment the pivot language");
    if (k < 1) throw std::invalid_argument("split count for " + name + " must be >= 1");
  }
  // Sentence -> split index for every fragmented language, per data split.
  std::map<LangId, LangId> first_new;  // origin -> id of its first split
  std::vector<LangId> remap(corpus.languages.size());
  for (LangId l = 0; l < corpus.n_languages(); ++l) {
    const auto& info = corpus.languages[static_cast<std::size_t>(l)];
    auto it = splits.find(info.name);
    remap[static_cast<std::size_t>(l)] = out.n_languages();
    if (it == splits.end()) {
      out.languages.push_back(info);
      continue;
    }
    first_new[l] = out.n_languages();
    for (int s = 1; s <= it->second; ++s) {
      auto part = info;
      part.name = info.name + "#" + std::to_string(s);
      part.origin = info.origin;
      out.languages.push_back(part);
      out.fragments[info.name].push_back(part.name);
    }
  }
  out.pivot = remap[static_cast<std::size_t>(corpus.pivot)];

  auto assign = [&](const std::vector<ParallelPair>& data, std::vector<ParallelPair>& dest, const std::string& tag) {
    // Collect sentence ids per fragmented language, shuffle, cut into k equal blocks.
    std::map<LangId, std::map<int, int>> part_of;
    for (const auto& [origin, first] : first_new) {
      std::set<int> ids;
      for (const auto& p : data) {
        const LangId other = p.pair.source == corpus.pivot ? p.pair.target : p.pair.source;
        if (other == origin) ids.insert(p.sentence);
      }
      const int k = splits.at(corpus.languages[static_cast<std::size_t>(origin)].name);
      if (k > static_cast<int>(ids.size()) && tag == "train") {
        throw std::invalid_argument("split count " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) +
                                    " sentences of " + corpus.languages[static_cast<std::size_t>(origin)].name);
      }
      std::vector<int> order(ids.begin(), ids.end());
      auto rng = make_rng(seed, "fragment." + tag + "." + corpus.languages[static_cast<std::size_t>(origin)].name);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < order.size(); ++i) {
        part_of[origin][order[i]] = static_cast<int>(i * static_cast<std::size_t>(k) / order.size());
      }
    }
    for (const auto& p : data) {
      auto q = p;
      auto map_lang = [&](LangId l) {
        auto f = first_new.find(l);
        return f == first_new.end() ? remap[static_cast<std::size_t>(l)] : f->second + part_of[l].at(p.sentence);
      };
      q.pair = {map_lang(p.pair.source), map_lang(p.pair.target)};
      dest.push_back(std::move(q));
    }
  };
  assign(corpus.train, out.train, "train");
  assign(corpus.valid, out.valid, "valid");
  assign(corpus.test, out.test, "test");
  // Zero-shot pairs keep the first split of each fragmented language.
  for (const auto& p : corpus.zero_shot) {
    auto q = p;
    auto map_lang = [&](LangId l) {
      auto f = first_new.find(l);
      return f == first_new.end() ? remap[static_cast<std::size_t>(l)] : f->second;
    };
    q.pair = {map_lang(p.pair.source), map_lang(p.pair.target)};
    out.zero_shot.push_back(std::move(q));
  }
  return out;
}

std::vector<double> temperature_distribution(std::span<const double> sizes, double temperature) {
  if (sizes.empty()) throw std::invalid_argument("temperature sampling over an empty language list");
  if (!(temperature >= 1.0)) throw std::invalid_argument("temperature must be >= 1");
  std::vector<double> p;
  p.reserve(sizes.size());
  for (double s : sizes) {
    if (!(s > 0.0)) throw std::invalid_argument("language sizes must be positive");
    p.push_back(std::pow(s, 1.0 / temperature));
  }
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= z;
  return p;
}

std::size_t tagged_tokens(const ParallelPair& p) { return p.source.size() + 2 + p.target.size() + 1; }

BatchSampler::BatchSampler(const Corpus& corpus, std::span<const ParallelPair> pairs, double temperature,
                           std::size_t token_budget)
    : corpus_(corpus), budget_(token_budget) {
  if (token_budget == 0) throw std::invalid_argument("batch token budget must be positive");
  std::map<LanguagePair, std::vector<const ParallelPair*>> grouped;
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& p : pairs) {
    grouped[p.pair].push_back(&p);
    shortest = std::min(shortest, tagged_tokens(p));
  }
  if (grouped.empty()) throw std::invalid_argument("no training pairs to sample from");
  if (budget_ < shortest) {
    throw std::invalid_argument("batch budget " + std::to_string(budget_) + " is below the shortest tagged pair (" +
                                std::to_string(shortest) + " tokens)");
  }
  std::vector<double> sizes;
  for (auto& [dir, items] : grouped) {
    directions_.push_back(dir);
    sizes.push_back(static_cast<double>(items.size()));
    members_.push_back(std::move(items));
  }
  probs_ = temperature_distribution(sizes, temperature);
}

std::vector<Example> BatchSampler::next(Rng& rng) const {
  std::discrete_distribution<std::size_t> pick_dir(probs_.begin(), probs_.end());
  std::vector<const ParallelPair*> chosen;
  std::size_t used = 0;
  while (true) {
    const auto d = pick_dir(rng);
    const auto& items = members_[d];
    const auto* p = items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
    const auto cost = tagged_tokens(*p);
    if (used + cost > budget_) {
      if (chosen.empty()) continue;  // this draw alone is too long; others fit
      break;
    }
    used += cost;
    chosen.push_back(p);
  }
  std::stable_sort(chosen.begin(), chosen.end(), [](const auto* a, const auto* b) { return a->pair < b->pair; });
  std::vector<Example> out;
  out.reserve(chosen.size());
  for (const auto* p : chosen) out.push_back(corpus_.to_example(*p));
  return out;
}

std::string corpus_manifest(const Corpus& corpus) {
  json m;
  m["n_symbols"] = corpus.n_symbols;
  m["n_concepts"] = corpus.languages.empty() ? 0 : corpus.languages.front().cipher.size();
  m["pivot"] = corpus.languages[static_cast<std::size_t>(corpus.pivot)].name;
  m["filtered"] = corpus.filtered;
  json langs = json::array();
  for (const auto& l : corpus.languages) {
    langs.push_back({{"name", l.name},
                     {"parent", l.parent ? json(*l.parent) : json(nullptr)},
                     {"relatedness", l.relatedness},
                     {"reorder", l.reorder},
                     {"family", l.family},
                     {"origin", l.origin},
                     {"cipher", l.cipher},
                     {"cipher_hash", cipher_hash(l.cipher)}});
  }
  m["languages"] = langs;
  m["fragments"] = corpus.fragments;
  auto counts = [&](const std::vector<ParallelPair>& data) {
    std::map<std::string, std::size_t> c;
    for (const auto& p : data) {
      ++c[corpus.languages[static_cast<std::size_t>(p.pair.source)].name + "-" +
          corpus.languages[static_cast<std::size_t>(p.pair.target)].name];
    }
    return c;
  };
  m["counts"] = {{"train", counts(corpus.train)},
                 {"valid", counts(corpus.valid)},
                 {"test", counts(corpus.test)},
                 {"zeroshot", counts(corpus.zero_shot)}};
  return m.dump(2) + "\n";
}

namespace {

const char* const kSplitFiles[] = {"train.tsv", "valid.tsv", "test.tsv", "zeroshot.tsv"};

void write_pairs(const Corpus& corpus, const std::vector<ParallelPair>& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto tokens = [&](const std::vector<int>& seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
  };
  for (const auto& p : data) {
    out << corpus.languages[static_cast<std::size_t>(p.pair.source)].name << '\t'
        << corpus.languages[static_cast<std::size_t>(p.pair.target)].name << '\t';
    tokens(p.source);
    out << '\t';
    tokens(p.target);
    out << '\t' << p.sentence << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<int> parse_tokens(const std::string& field, int n_symbols, const std::string& where) {
  std::vector<int> out;
  std::istringstream in(field);
  int v;
  while (in >> v) {
    if (v < 0 || v >= n_symbols) throw std::runtime_error(where + ": token " + std::to_string(v) + " out of range");
    out.push_back(v);
  }
  if (!in.eof()) throw std::runtime_error(where + ": malformed token list");
  return out;
}

std::vector<ParallelPair> read_pairs(const Corpus& corpus, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<ParallelPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string tok;
    while (std::getline(fields, tok, '\t')) f.push_back(tok);
    const auto where = path.filename().string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw std::runtime_error(where + ": expected 5 tab-separated fields");
    int sentence = 0;
    try {
      std::size_t used = 0;
      sentence = std::stoi(f[4], &used);
      if (used != f[4].size() || sentence < 0) throw std::invalid_argument(f[4]);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad sentence id '" + f[4] + "'");
    }
    ParallelPair p{{corpus.id_of(f[0]), corpus.id_of(f[1])},
                   parse_tokens(f[2], corpus.n_symbols, where),
                   parse_tokens(f[3], corpus.n_symbols, where), sentence};
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<ParallelPair>* splits[] = {&corpus.train, &corpus.valid, &corpus.test, &corpus.zero_shot};
  for (int i = 0; i < 4; ++i) write_pairs(corpus, *splits[i], dir / kSplitFiles[i]);
  std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  m << corpus_manifest(corpus);
  if (!m) throw std::runtime_error("failed writing manifest in " + dir.string());
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no corpus manifest at " + (dir / "manifest.json").string());
  const json m = json::parse(in);
  Corpus c;
  c.n_symbols = m.at("n_symbols").get<int>();
  const auto n_concepts = m.at("n_concepts").get<std::size_t>();
  c.filtered = m.value("filtered", std::size_t{0});
  for (const auto& l : m.at("languages")) {
    LanguageInfo info;
    info.name = l.at("name").get<std::string>();
    if (!l.at("parent").is_null()) info.parent = l.at("parent").get<std::string>();
    info.relatedness = l.at("relatedness").get<double>();
    info.reorder = l.value("reorder", false);
    info.family = l.at("family").get<std::string>();
    info.origin = l.at("origin").get<std::string>();
    info.cipher = l.at("cipher").get<std::vector<int>>();
    if (info.cipher.size() != n_concepts) throw std::runtime_error("cipher size mismatch for " + info.name);
    for (int sym : info.cipher)
      if (sym < 0 || sym >= c.n_symbols) throw std::runtime_error("cipher symbol out of range for " + info.name);
    c.languages.push_back(std::move(info));
  }
  c.pivot = c.id_of(m.at("pivot").get<std::string>());
  c.fragments = m.at("fragments").get<std::map<std::string, std::vector<std::string>>>();
  std::vector<ParallelPair>* splits[] = {&c.train, &c.valid, &c.test, &c.zero_shot};
  for (int i = 0; i < 4; ++i) *splits[i] = read_pairs(c, dir / kSplitFiles[i]);
  return c;
}

}  // namespace hyperadapters
