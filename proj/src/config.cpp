#include "hyperadapters/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace hyperadapters {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw std::invalid_argument("config " + key + " = '" + value + "': " + why);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  const auto v = trim(value);
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad(key, value, "not a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, value, "expected true or false");
}

std::map<std::string, int> parse_splits(const std::string& key, const std::string& value) {
  std::map<std::string, int> out;
  for (const auto& item : split(value, ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) bad(key, value, "expected name:count entries");
    out[trim(item.substr(0, colon))] = parse_number<int>(key, item.substr(colon + 1));
  }
  return out;
}

std::string join_splits(const std::map<std::string, int>& m) {
  std::string out;
  for (const auto& [name, k] : m) out += (out.empty() ? "" : ",") + name + ":" + std::to_string(k);
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, const std::string& sep, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + fmt(items[i]);
  return out;
}

std::string b(bool v) { return v ? "true" : "false"; }

LanguageSpec& language(LanguageFamilySpec& spec, const std::string& name) {
  for (auto& l : spec.languages)
    if (l.name == name) return l;
  spec.languages.push_back(LanguageSpec{name, std::nullopt, 0.0, 0, false});
  return spec.languages.back();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::string MaskVariant::str() const {
  auto out = enc.str() + "|" + dec.str();
  if (dropout > 0.0) out += "@" + format_double(dropout);
  return out;
}

MaskVariant MaskVariant::parse(const std::string& text) {
  MaskVariant v;
  auto body = trim(text);
  if (const auto at = body.find('@'); at != std::string::npos) {
    v.dropout = parse_number<double>("mask dropout", body.substr(at + 1));
    body = body.substr(0, at);
  }
  const auto bar = body.find('|');
  if (bar == std::string::npos) throw std::invalid_argument("mask variant '" + text + "' needs enc|dec");
  v.enc = MaskPolicy::parse(trim(body.substr(0, bar)));
  v.dec = MaskPolicy::parse(trim(body.substr(bar + 1)));
  return v;
}

void ExperimentConfig::validate() const {
  if (!corpus_path) corpus.validate();
  auto m = model;
  if (m.vocab_size == 0) m.vocab_size = 1024;  // filled from the corpus later
  m.validate();
  scheme.validate();
  train.validate();
  if (train.seed != seed) throw std::invalid_argument("train seed must equal the run seed");
  if (probe.seeds.empty()) throw std::invalid_argument("probe.seeds must not be empty");
  if (probe.final_window <= 0) throw std::invalid_argument("probe.final_window must be positive");
  for (const auto& [name, k] : fragments)
    if (k < 1) throw std::invalid_argument("fragment count for " + name + " must be >= 1");
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& value) {
  const auto key = trim(raw_key);
  const auto dot = key.find('.');
  if (dot == std::string::npos) bad(key, value, "expected section.key");
  const auto section = key.substr(0, dot);
  auto name = key.substr(dot + 1);
  auto num_i = [&] { return parse_number<int>(key, value); };
  auto num_d = [&] { return parse_number<double>(key, value); };
  auto flag = [&] { return parse_bool(key, value); };

  if (section == "run") {
    if (name == "seed") {
      seed = parse_number<std::uint64_t>(key, value);
      train.seed = seed;
    } else if (name == "output") {
      output_dir = trim(value);
    } else {
      bad(key, value, "unknown key");
    }
  } else if (section == "corpus") {
    auto& c = corpus;
    if (name == "path") {
      if (trim(value).empty()) corpus_path.reset();
      else corpus_path = trim(value);
    } else if (name == "concept_vocab") c.concept_vocab = num_i();
    else if (name == "surface_vocab") c.surface_vocab = num_i();
    else if (name == "pivot") c.pivot = trim(value);
    else if (name == "min_length") c.min_length = num_i();
    else if (name == "max_length") c.max_length = num_i();
    else if (name == "valid") c.valid_sentences = num_i();
    else if (name == "test") c.test_sentences = num_i();
    else if (name == "zero_shot") c.zero_shot_sentences = num_i();
    else if (name == "max_length_ratio") c.max_length_ratio = num_d();
    else if (name == "max_tokens") c.max_tokens = num_i();
    else if (name == "fragments") fragments = parse_splits(key, value);
    else bad(key, value, "unknown key");
  } else if (section == "language") {
    const auto last = name.rfind('.');
    if (last == std::string::npos) bad(key, value, "expected language.<name>.<field>");
    auto& l = language(corpus, name.substr(0, last));
    const auto field = name.substr(last + 1);
    if (field == "parent") {
      if (trim(value).empty()) l.parent.reset();
      else l.parent = trim(value);
    } else if (field == "relatedness") l.relatedness = num_d();
    else if (field == "sentences") l.sentences = num_i();
    else if (field == "reorder") l.reorder = flag();
    else bad(key, value, "unknown key");
  } else if (section == "model") {
    auto& m = model;
    if (name == "enc_layers") m.n_enc_layers = num_i();
    else if (name == "dec_layers") m.n_dec_layers = num_i();
    else if (name == "d_model") m.d_model = num_i();
    else if (name == "d_ff") m.d_ff = num_i();
    else if (name == "heads") m.n_heads = num_i();
    else if (name == "vocab_size") m.vocab_size = num_i();
    else if (name == "dropout") m.dropout = num_d();
    else if (name == "tie_embeddings") m.tie_embeddings = flag();
    else if (name == "pre_norm") m.pre_norm = flag();
    else bad(key, value, "unknown key");
  } else if (section == "scheme") {
    auto& s = scheme;
    auto& h = scheme.hyper;
    if (name == "kind") s.kind = parse_scheme(trim(value));
    else if (name == "bottleneck") s.bottleneck = num_i();
    else if (name == "multi_parallel") s.multi_parallel = flag();
    else if (name == "hidden") h.hidden = num_i();
    else if (name == "emb_dim") h.emb_dim = num_i();
    else if (name == "res_blocks") h.res_blocks = num_i();
    else if (name == "nonlinear_input") h.nonlinear_input = flag();
    else if (name == "rescale") h.rescale = flag();
    else if (name == "enc_policy") h.enc_policy = MaskPolicy::parse(trim(value));
    else if (name == "dec_policy") h.dec_policy = MaskPolicy::parse(trim(value));
    else if (name == "dropout") h.dropout = num_d();
    else if (name == "aware_init") h.aware_init = flag();
    else bad(key, value, "unknown key");
  } else if (section == "train") {
    auto& t = train;
    if (name == "peak_lr") t.peak_lr = num_d();
    else if (name == "warmup") t.warmup_steps = num_i();
    else if (name == "steps") t.total_steps = num_i();
    else if (name == "token_budget") t.token_budget = parse_number<std::size_t>(key, value);
    else if (name == "label_smoothing") t.label_smoothing = num_d();
    else if (name == "temperature") t.temperature = num_d();
    else if (name == "eval_every") t.eval_every = num_i();
    else if (name == "clip_norm") t.clip_norm = num_d();
    else if (name == "instrument") t.instrument = flag();
    else bad(key, value, "unknown key");
  } else if (section == "probe") {
    auto& p = probe;
    if (name == "seeds") {
      p.seeds.clear();
      for (const auto& s : split(value, ',')) p.seeds.push_back(parse_number<std::uint64_t>(key, s));
    } else if (name == "d_h") {
      p.d_h.clear();
      for (const auto& s : split(value, ',')) p.d_h.push_back(parse_number<int>(key, s));
    } else if (name == "rescale") {
      const auto v = trim(value);
      if (v == "both") p.rescale = {true, false};
      else {
        p.rescale.clear();
        for (const auto& s : split(v, ',')) p.rescale.push_back(parse_bool(key, s));
      }
    } else if (name == "final_window") p.final_window = num_i();
    else if (name == "divergence_sd") p.divergence_sd = num_d();
    else if (name == "swaps") {
      p.swaps.clear();
      for (const auto& s : split(value, ';')) {
        auto parts = split(s, ':');
        if (parts.size() != 3) bad(key, value, "expected language:related:distant entries");
        p.swaps.push_back({parts[0], parts[1], parts[2]});
      }
    } else if (name == "schemes") {
      p.schemes.clear();
      for (const auto& s : split(value, ',')) p.schemes.push_back(parse_scheme(s));
    } else if (name == "fragments") p.fragments = parse_splits(key, value);
    else if (name == "masks") {
      p.masks.clear();
      for (const auto& s : split(value, ';')) p.masks.push_back(MaskVariant::parse(s));
    } else bad(key, value, "unknown key");
  } else {
    bad(key, value, "unknown section");
  }
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream o;
  auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  o << "[run]\n";
  kv("seed", std::to_string(seed));
  kv("output", output_dir.string());

  o << "\n[corpus]\n";
  kv("path", corpus_path ? corpus_path->string() : "");
  kv("concept_vocab", std::to_string(corpus.concept_vocab));
  kv("surface_vocab", std::to_string(corpus.surface_vocab));
  kv("pivot", corpus.pivot);
  kv("min_length", std::to_string(corpus.min_length));
  kv("max_length", std::to_string(corpus.max_length));
  kv("valid", std::to_string(corpus.valid_sentences));
  kv("test", std::to_string(corpus.test_sentences));
  kv("zero_shot", std::to_string(corpus.zero_shot_sentences));
  kv("max_length_ratio", format_double(corpus.max_length_ratio));
  kv("max_tokens", std::to_string(corpus.max_tokens));
  kv("fragments", join_splits(fragments));
  for (const auto& l : corpus.languages) {
    o << "\n[language." << l.name << "]\n";
    kv("parent", l.parent.value_or(""));
    kv("relatedness", format_double(l.relatedness));
    kv("sentences", std::to_string(l.sentences));
    kv("reorder", b(l.reorder));
  }

  o << "\n[model]\n";
  kv("enc_layers", std::to_string(model.n_enc_layers));
  kv("dec_layers", std::to_string(model.n_dec_layers));
  kv("d_model", std::to_string(model.d_model));
  kv("d_ff", std::to_string(model.d_ff));
  kv("heads", std::to_string(model.n_heads));
  kv("vocab_size", std::to_string(model.vocab_size));
  kv("dropout", format_double(model.dropout));
  kv("tie_embeddings", b(model.tie_embeddings));
  kv("pre_norm", b(model.pre_norm));

  const auto& h = scheme.hyper;
  o << "\n[scheme]\n";
  kv("kind", scheme_name(scheme.kind));
  kv("bottleneck", std::to_string(scheme.bottleneck));
  kv("multi_parallel", b(scheme.multi_parallel));
  kv("hidden", std::to_string(h.hidden));
  kv("emb_dim", std::to_string(h.emb_dim));
  kv("res_blocks", std::to_string(h.res_blocks));
  kv("nonlinear_input", b(h.nonlinear_input));
  kv("rescale", b(h.rescale));
  kv("enc_policy", h.enc_policy.str());
  kv("dec_policy", h.dec_policy.str());
  kv("dropout", format_double(h.dropout));
  kv("aware_init", b(h.aware_init));

  o << "\n[train]\n";
  kv("peak_lr", format_double(train.peak_lr));
  kv("warmup", std::to_string(train.warmup_steps));
  kv("steps", std::to_string(train.total_steps));
  kv("token_budget", std::to_string(train.token_budget));
  kv("label_smoothing", format_double(train.label_smoothing));
  kv("temperature", format_double(train.temperature));
  kv("eval_every", std::to_string(train.eval_every));
  kv("clip_norm", format_double(train.clip_norm));
  kv("instrument", b(train.instrument));

  o << "\n[probe]\n";
  kv("seeds", join(probe.seeds, ",", [](auto s) { return std::to_string(s); }));
  kv("d_h", join(probe.d_h, ",", [](auto s) { return std::to_string(s); }));
  kv("rescale", join(probe.rescale, ",", [](bool s) { return b(s); }));
  kv("final_window", std::to_string(probe.final_window));
  kv("divergence_sd", format_double(probe.divergence_sd));
  kv("swaps", join(probe.swaps, ";", [](const SwapProbe& s) { return s.language + ":" + s.related + ":" + s.distant; }));
  kv("schemes", join(probe.schemes, ",", [](SchemeKind k) { return std::string(scheme_name(k)); }));
  kv("fragments", join_splits(probe.fragments));
  kv("masks", join(probe.masks, ";", [](const MaskVariant& m) { return m.str(); }));
  return o.str();
}

ExperimentConfig ExperimentConfig::from_ini(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw std::invalid_argument("config key '" + section + "' outside a section");
    for (const auto& [key, node] : body) cfg.set(section + "." + key, node.data());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_ini(text.str());
}

std::string ExperimentConfig::hash() const {
  auto copy = *this;
  copy.output_dir.clear();
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << fnv1a(copy.to_ini());
  return o.str();
}

Corpus materialize_corpus(const ExperimentConfig& config) {
  Corpus c = config.corpus_path ? read_corpus(*config.corpus_path) : generate_corpus(config.corpus, config.seed);
  if (!config.fragments.empty()) c = fragment(c, config.fragments, derive_seed(config.seed, "corpus.fragment"));
  return c;
}

std::string manifest_hash(const Corpus& corpus) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << fnv1a(corpus_manifest(corpus));
  return o.str();
}

}  // namespace hyperadapters
