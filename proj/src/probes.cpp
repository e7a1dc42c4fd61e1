#include "hyperadapters/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hyperadapters {

using json = nlohmann::json;

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

/// JSON cannot hold non-finite numbers; they become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<Example> examples_where(const Corpus& corpus, const std::vector<ParallelPair>& data,
                                    const std::function<bool(const ParallelPair&)>& keep) {
  std::vector<Example> out;
  for (const auto& p : data)
    if (keep(p)) out.push_back(corpus.to_example(p));
  std::stable_sort(out.begin(), out.end(), [](const Example& a, const Example& b) { return a.pair < b.pair; });
  return out;
}

SchemeConfig hyper_variant(const ExperimentConfig& config) {
  auto s = config.scheme;
  s.kind = SchemeKind::Hyper;
  return s;
}

}  // namespace

json Provenance::to_json() const {
  return {{"config_hash", config_hash}, {"manifest_hash", manifest_hash}, {"seeds", seeds}};
}

Provenance provenance_of(const ExperimentConfig& config, const Corpus& corpus) {
  return {config.hash(), manifest_hash(corpus), config.probe.seeds};
}

TrainedModel train_scheme(const Corpus& corpus, const ExperimentConfig& config, const SchemeConfig& scheme,
                          std::uint64_t seed) {
  TrainedModel out;
  out.system = std::make_unique<AdaptedModel>(config.model, scheme, corpus.vocabulary(), corpus.pivot, seed);
  auto tc = config.train;
  tc.seed = seed;
  out.result = train(*out.system, corpus, tc);
  restore_best(*out.system, out.result);
  return out;
}

double sequence_token_accuracy(const std::vector<int>& hypothesis, const std::vector<int>& reference) {
  const std::size_t n = std::max(hypothesis.size(), reference.size());
  if (n == 0) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < std::min(hypothesis.size(), reference.size()); ++i) hit += hypothesis[i] == reference[i];
  return static_cast<double>(hit) / static_cast<double>(n);
}

namespace {

std::vector<std::vector<int>> decode_all(const AdaptedModel& system, std::span<const Example> examples,
                                         AdapterProvider* adapters) {
  constexpr std::size_t kChunk = 64;
  std::vector<std::vector<int>> out;
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    const auto part = examples.subspan(begin, std::min(kChunk, examples.size() - begin));
    std::size_t longest = 0;
    for (const auto& e : part) longest = std::max(longest, e.source.size());
    auto hyps = system.model().greedy_decode(make_source_batch(part, system.vocabulary()), adapters, 2 * longest + 2);
    for (auto& h : hyps) out.push_back(std::move(h));
  }
  return out;
}

}  // namespace

double decode_accuracy(const AdaptedModel& system, std::span<const Example> examples, AdapterProvider* adapters) {
  if (examples.empty()) throw std::invalid_argument("decode_accuracy: no examples");
  const auto hyps = decode_all(system, examples, adapters);
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) total += sequence_token_accuracy(hyps[i], examples[i].target);
  return total / static_cast<double>(examples.size());
}

double tail_mean(const std::vector<double>& values, int window) {
  if (values.empty() || window <= 0) return std::numeric_limits<double>::quiet_NaN();
  const auto n = std::min(values.size(), static_cast<std::size_t>(window));
  return std::accumulate(values.end() - static_cast<std::ptrdiff_t>(n), values.end(), 0.0) / static_cast<double>(n);
}

// ---------------------------------------------------------------- stability

StabilityReport stability_sweep(const Corpus& corpus, const ExperimentConfig& config) {
  const auto& p = config.probe;
  if (p.d_h.size() < 2) throw std::invalid_argument("stability sweep needs at least two hidden sizes");
  StabilityReport report;
  report.final_window = p.final_window;
  report.divergence_sd = p.divergence_sd;
  auto tc = config.train;
  tc.instrument = true;
  for (int d_h : p.d_h) {
    for (bool rescale : p.rescale) {
      for (auto seed : p.seeds) {
        auto scheme = hyper_variant(config);
        scheme.hyper.hidden = d_h;
        scheme.hyper.rescale = rescale;
        AdaptedModel system(config.model, scheme, corpus.vocabulary(), corpus.pivot, seed);
        tc.seed = seed;
        const auto result = train(system, corpus, tc);
        StabilityRun run{d_h, rescale, seed, {}, {}, result.diverged(), result.diverged_at};
        for (const auto& r : result.records) {
          run.loss.push_back(r.loss);
          const double m = r.act_sd.empty() ? 0.0 : *std::max_element(r.act_sd.begin(), r.act_sd.end());
          run.max_act_sd.push_back(m);
          if (!(m <= p.divergence_sd) && !run.diverged) {
            run.diverged = true;
            run.diverged_at = r.step;
          }
        }
        report.runs.push_back(std::move(run));
      }
    }
  }
  return report;
}

double StabilityReport::final_loss(int d_h, bool rescale) const {
  std::vector<double> v;
  for (const auto& r : runs)
    if (r.d_h == d_h && r.rescale == rescale) v.push_back(tail_mean(r.loss, final_window));
  if (v.empty()) throw std::out_of_range("no stability run for d_h " + std::to_string(d_h));
  return mean(v);
}

double StabilityReport::final_max_sd(int d_h, bool rescale) const {
  std::vector<double> v;
  for (const auto& r : runs)
    if (r.d_h == d_h && r.rescale == rescale) v.push_back(tail_mean(r.max_act_sd, final_window));
  if (v.empty()) throw std::out_of_range("no stability run for d_h " + std::to_string(d_h));
  return mean(v);
}

std::string StabilityReport::csv() const {
  std::ostringstream o;
  o << "d_h,rescale,seed,step,loss,max_act_sd\n";
  for (const auto& r : runs)
    for (std::size_t i = 0; i < r.loss.size(); ++i)
      o << r.d_h << ',' << (r.rescale ? "true" : "false") << ',' << r.seed << ',' << i + 1 << ',' << num(r.loss[i])
        << ',' << num(r.max_act_sd[i]) << '\n';
  return o.str();
}

json StabilityReport::summary() const {
  json rows = json::array();
  std::vector<std::pair<int, bool>> seen;
  for (const auto& r : runs) {
    if (std::find(seen.begin(), seen.end(), std::pair{r.d_h, r.rescale}) != seen.end()) continue;
    seen.emplace_back(r.d_h, r.rescale);
    int diverged = 0;
    for (const auto& q : runs) diverged += q.d_h == r.d_h && q.rescale == r.rescale && q.diverged;
    rows.push_back({{"d_h", r.d_h},
                    {"rescale", r.rescale},
                    {"final_loss", jnum(final_loss(r.d_h, r.rescale))},
                    {"final_max_act_sd", jnum(final_max_sd(r.d_h, r.rescale))},
                    {"diverged_runs", diverged}});
  }
  return {{"final_window", final_window}, {"divergence_sd", divergence_sd}, {"configurations", rows}};
}

// -------------------------------------------------------------- convergence

int matched_hidden(const ExperimentConfig& config, int n_languages, std::size_t target) {
  CountQuery q;
  q.kind = SchemeKind::Hyper;
  q.n_languages = n_languages;
  q.n_layers = config.model.layout().total();
  q.d_model = config.model.d_model;
  q.bottleneck = config.scheme.bottleneck;
  q.emb_dim = config.scheme.hyper.emb_dim;
  q.res_blocks = config.scheme.hyper.res_blocks;
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int h = 1; h <= 8192; ++h) {
    q.hidden = h;
    const double gap = std::abs(static_cast<double>(count_params(q)) - static_cast<double>(target));
    if (gap < best_gap) {
      best_gap = gap;
      best = h;
    }
  }
  return best;
}

ConvergenceReport convergence_compare(const Corpus& corpus, const ExperimentConfig& config,
                                      const std::vector<std::pair<std::string, SchemeConfig>>& schemes,
                                      double tolerance) {
  if (schemes.empty()) throw std::invalid_argument("convergence_compare: no schemes");
  ConvergenceReport report;
  for (const auto& [label, scheme] : schemes) {
    ConvergenceCurve c;
    c.label = label;
    c.scheme = scheme;
    c.extra_params = AdaptedModel(config.model, scheme, corpus.vocabulary(), corpus.pivot, 0).adapter_parameter_count();
    report.curves.push_back(std::move(c));
  }
  const double base = static_cast<double>(report.curves.front().extra_params);
  for (const auto& c : report.curves) {
    if (base > 0 && std::abs(static_cast<double>(c.extra_params) - base) > tolerance * base) {
      throw std::invalid_argument("scheme " + c.label + " has " + std::to_string(c.extra_params) +
                                  " extra parameters, outside the matched budget of " +
                                  std::to_string(report.curves.front().extra_params));
    }
  }
  for (auto& c : report.curves) {
    std::map<int, std::vector<double>> by_step;
    for (auto seed : config.probe.seeds) {
      auto t = train_scheme(corpus, config, c.scheme, seed);
      for (const auto& r : t.result.records)
        if (r.val_loss) by_step[r.step].push_back(*r.val_loss);
    }
    for (const auto& [step, vals] : by_step) {
      if (vals.size() != config.probe.seeds.size()) continue;  // a diverged seed stops contributing
      c.steps.push_back(step);
      c.val_loss.push_back(mean(vals));
      if (c.val_loss.back() < c.best) {
        c.best = c.val_loss.back();
        c.best_step = step;
      }
    }
  }
  report.reference = report.curves.front().best;
  report.reference_label = report.curves.front().label;
  for (auto& c : report.curves) {
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      if (c.val_loss[i] <= report.reference) {
        c.crossing = c.steps[i];
        break;
      }
    }
  }
  return report;
}

std::string ConvergenceReport::csv() const {
  std::ostringstream o;
  o << "scheme,extra_params,step,val_loss\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.steps.size(); ++i)
      o << c.label << ',' << c.extra_params << ',' << c.steps[i] << ',' << num(c.val_loss[i]) << '\n';
  return o.str();
}

json ConvergenceReport::summary() const {
  json rows = json::array();
  for (const auto& c : curves)
    rows.push_back({{"scheme", c.label},
                    {"extra_params", c.extra_params},
                    {"best_val_loss", jnum(c.best)},
                    {"best_step", c.best_step},
                    {"crossing_step", c.crossing ? json(*c.crossing) : json("inf")}});
  return {{"reference", jnum(reference)}, {"reference_scheme", reference_label}, {"schemes", rows}};
}

// --------------------------------------------------------------------- swap

SwapReport adapter_swap_eval(const AdaptedModel& system, const Corpus& corpus, const std::vector<SwapProbe>& probes) {
  SwapReport report;
  report.scheme = scheme_name(system.scheme().kind);
  AdapterProvider* inner = system.adapters();
  if (!inner) throw std::invalid_argument("adapter swap needs an adapter scheme");
  for (const auto& probe : probes) {
    const LangId x = corpus.id_of(probe.language), rel = corpus.id_of(probe.related), dist = corpus.id_of(probe.distant);
    const auto examples = examples_where(
        corpus, corpus.test, [&](const ParallelPair& p) { return p.pair.source == x && p.pair.target == corpus.pivot; });
    if (examples.empty()) throw std::invalid_argument("no " + probe.language + "->pivot test pairs");
    auto routed_as = [&](LangId replacement) {
      RouteRewriteProvider swapped(*inner, [x, replacement](const Route& r) {
        Route out = r;
        if (out.source == x) out.source = replacement;
        return out;
      });
      return system.score(examples, 0.0, &swapped).accuracy;
    };
    report.rows.push_back({probe, routed_as(x), routed_as(rel), routed_as(dist)});
  }
  return report;
}

double SwapReport::mean_acc() const {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.acc());
  return mean(v);
}

std::string SwapReport::csv() const {
  std::ostringstream o;
  o << "scheme,language,related,distant,org,sim,dist,acc\n";
  for (const auto& r : rows)
    o << scheme << ',' << r.probe.language << ',' << r.probe.related << ',' << r.probe.distant << ',' << num(r.org)
      << ',' << num(r.sim) << ',' << num(r.dist) << ',' << num(r.acc()) << '\n';
  return o.str();
}

json SwapReport::summary() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"language", r.probe.language},
                      {"org", jnum(r.org)},
                      {"sim", jnum(r.sim)},
                      {"dist", jnum(r.dist)},
                      {"acc", jnum(r.acc())}});
  return {{"scheme", scheme}, {"mean_acc", jnum(mean_acc())}, {"rows", rows_j}};
}

// --------------------------------------------------------------- redundancy

RedundancyReport redundancy_experiment(const Corpus& original, const Corpus& fragmented, const ExperimentConfig& config) {
  auto kinds = config.probe.schemes;
  if (std::find(kinds.begin(), kinds.end(), SchemeKind::None) == kinds.end()) kinds.insert(kinds.begin(), SchemeKind::None);
  RedundancyReport report;
  for (auto kind : kinds) {
    auto scheme = config.scheme;
    scheme.kind = kind;
    RedundancyRow row;
    row.scheme = scheme_name(kind);
    std::vector<double> lo, lf, ao, af;
    for (auto seed : config.probe.seeds) {
      for (const Corpus* c : {&original, &fragmented}) {
        auto t = train_scheme(*c, config, scheme, seed);
        const double v = t.result.best_val_loss.value_or(std::numeric_limits<double>::infinity());
        const auto valid = examples_where(*c, c->valid, [](const ParallelPair&) { return true; });
        const double a = t.result.best_val_loss ? t.system->score(valid, 0.0).accuracy : 0.0;
        (c == &original ? lo : lf).push_back(v);
        (c == &original ? ao : af).push_back(a);
      }
    }
    row.original = mean(lo);
    row.fragmented = mean(lf);
    row.original_acc = mean(ao);
    row.fragmented_acc = mean(af);
    report.rows.push_back(row);
  }
  return report;
}

const RedundancyRow& RedundancyReport::row(SchemeKind kind) const {
  for (const auto& r : rows)
    if (r.scheme == scheme_name(kind)) return r;
  throw std::out_of_range("no redundancy row for " + scheme_name(kind));
}

std::string RedundancyReport::csv() const {
  std::ostringstream o;
  o << "scheme,original_val_loss,fragmented_val_loss,delta,original_acc,fragmented_acc\n";
  for (const auto& r : rows)
    o << r.scheme << ',' << num(r.original) << ',' << num(r.fragmented) << ',' << num(r.delta()) << ','
      << num(r.original_acc) << ',' << num(r.fragmented_acc) << '\n';
  return o.str();
}

json RedundancyReport::summary() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"scheme", r.scheme},
                      {"original_val_loss", jnum(r.original)},
                      {"fragmented_val_loss", jnum(r.fragmented)},
                      {"delta", jnum(r.delta())},
                      {"original_acc", jnum(r.original_acc)},
                      {"fragmented_acc", jnum(r.fragmented_acc)}});
  return {{"schemes", rows_j}};
}

// --------------------------------------------------------------- embeddings

RelatednessReport embedding_relatedness(const Tensor& embeddings, const std::vector<std::string>& names,
                                        const std::vector<std::string>& groups) {
  const std::size_t n = embeddings.shape()[0], e = embeddings.shape()[1];
  if (n < 2) throw std::invalid_argument("embedding relatedness needs at least two languages");
  if (names.size() != n || groups.size() != n) throw std::invalid_argument("one name and group per embedding row");
  RelatednessReport r;
  r.names = names;
  r.groups = groups;
  r.cosine.assign(n, std::vector<double>(n, 0.0));
  const auto v = embeddings.data();
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < e; ++k) norm[i] += v[i * e + k] * v[i * e + k];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < e; ++k) dot += v[i * e + k] * v[j * e + k];
      const double denom = std::sqrt(norm[i] * norm[j]);
      r.cosine[i][j] = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
    }
  }
  std::vector<double> within, between;
  std::map<std::string, std::vector<double>> by_group;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (groups[i] == groups[j]) {
        within.push_back(r.cosine[i][j]);
        by_group[groups[i]].push_back(r.cosine[i][j]);
      } else {
        between.push_back(r.cosine[i][j]);
      }
    }
  }
  r.within = within.empty() ? 0.0 : mean(within);
  r.between = between.empty() ? 0.0 : mean(between);
  for (const auto& [g, vals] : by_group) r.group_within[g] = mean(vals);
  return r;
}

RelatednessReport embedding_relatedness(const HyperNetwork& net, const Corpus& corpus, bool by_origin) {
  std::vector<std::string> names, groups;
  for (const auto& l : corpus.languages) {
    names.push_back(l.name);
    groups.push_back(by_origin ? l.origin : l.family);
  }
  return embedding_relatedness(net.language_embeddings()->value(), names, groups);
}

std::string RelatednessReport::csv() const {
  std::ostringstream o;
  o << "language,group";
  for (const auto& n : names) o << ',' << n;
  o << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    o << names[i] << ',' << groups[i];
    for (double c : cosine[i]) o << ',' << num(c);
    o << '\n';
  }
  return o.str();
}

json RelatednessReport::summary() const {
  json g = json::object();
  for (const auto& [name, v] : group_within) g[name] = jnum(v);
  return {{"within", jnum(within)}, {"between", jnum(between)}, {"gap", jnum(gap())}, {"group_within", g}};
}

// ----------------------------------------------------------------- zero-shot

ZeroShotReport zero_shot_eval(const Corpus& corpus, const ExperimentConfig& config) {
  if (corpus.zero_shot.empty()) throw std::invalid_argument("zero-shot evaluation needs held-out non-pivot pairs");
  for (const auto& p : corpus.train)
    if (p.pair.source != corpus.pivot && p.pair.target != corpus.pivot)
      throw std::invalid_argument("zero-shot evaluation needs pivot-centric training data");
  auto masks = config.probe.masks;
  if (masks.empty()) {
    for (const char* m : {"s,t|s,t", "s,t|t", "s|t"}) masks.push_back(MaskVariant::parse(m));
  }
  const auto direct = examples_where(corpus, corpus.zero_shot, [](const ParallelPair&) { return true; });
  const auto supervised = examples_where(corpus, corpus.test, [](const ParallelPair&) { return true; });
  const auto vocab = corpus.vocabulary();

  auto two_hop = [&](const AdaptedModel& system) {
    std::vector<Example> first;
    for (const auto& e : direct) first.push_back({{e.pair.source, corpus.pivot}, e.source, {}});
    const auto mid = decode_all(system, first, system.adapters());
    std::vector<Example> second;
    for (std::size_t i = 0; i < direct.size(); ++i) {
      std::vector<int> src;
      for (int t : mid[i])
        if (vocab.is_symbol(t)) src.push_back(t);
      second.push_back({{corpus.pivot, direct[i].pair.target}, src, direct[i].target});
    }
    return decode_accuracy(system, second, system.adapters());
  };

  ZeroShotReport report;
  for (const auto& m : masks) {
    auto scheme = hyper_variant(config);
    scheme.hyper.enc_policy = m.enc;
    scheme.hyper.dec_policy = m.dec;
    scheme.hyper.dropout = m.dropout;
    std::vector<double> d, pv, s;
    for (auto seed : config.probe.seeds) {
      auto t = train_scheme(corpus, config, scheme, seed);
      d.push_back(decode_accuracy(*t.system, direct, t.system->adapters()));
      pv.push_back(two_hop(*t.system));
      s.push_back(decode_accuracy(*t.system, supervised, t.system->adapters()));
    }
    report.rows.push_back({m.str(), true, mean(d), mean(pv), mean(s)});
  }
  const auto& kinds = config.probe.schemes;
  if (std::find(kinds.begin(), kinds.end(), SchemeKind::Pair) != kinds.end()) {
    auto scheme = config.scheme;
    scheme.kind = SchemeKind::Pair;
    scheme.multi_parallel = false;
    std::vector<double> pv, s;
    bool applicable = true;
    for (auto seed : config.probe.seeds) {
      auto t = train_scheme(corpus, config, scheme, seed);
      try {
        decode_accuracy(*t.system, direct, t.system->adapters());
      } catch (const RoutingError&) {
        applicable = false;
      }
      pv.push_back(two_hop(*t.system));
      s.push_back(decode_accuracy(*t.system, supervised, t.system->adapters()));
    }
    report.rows.push_back({"pair", applicable, std::numeric_limits<double>::quiet_NaN(), mean(pv), mean(s)});
  }
  return report;
}

const ZeroShotRow& ZeroShotReport::row(const std::string& variant) const {
  const auto key = variant == "pair" ? variant : MaskVariant::parse(variant).str();
  for (const auto& r : rows)
    if (r.variant == key) return r;
  throw std::out_of_range("no zero-shot row for " + variant);
}

std::string ZeroShotReport::csv() const {
  std::ostringstream o;
  o << "variant,direct,pivot,supervised\n";
  for (const auto& r : rows)
    o << r.variant << ',' << (r.applicable ? num(r.direct) : "n/a") << ',' << num(r.pivot) << ',' << num(r.supervised)
      << '\n';
  return o.str();
}

json ZeroShotReport::summary() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"variant", r.variant},
                      {"direct", r.applicable ? jnum(r.direct) : json("not-applicable")},
                      {"pivot", jnum(r.pivot)},
                      {"supervised", jnum(r.supervised)}});
  return {{"variants", rows_j}};
}

// ------------------------------------------------------------------- output

std::filesystem::path write_probe_report(const std::filesystem::path& dir, const std::string& probe,
                                         const Provenance& provenance, const std::string& csv, json summary) {
  const auto out = dir / (probe + "-" + provenance.config_hash);
  std::filesystem::create_directories(out);
  std::ofstream c(out / (probe + ".csv"), std::ios::binary | std::ios::trunc);
  c << csv;
  summary["probe"] = probe;
  summary["provenance"] = provenance.to_json();
  std::ofstream s(out / "summary.json", std::ios::binary | std::ios::trunc);
  s << summary.dump(2) << '\n';
  if (!c || !s) throw std::runtime_error("failed writing probe report in " + out.string());
  return out;
}

}  // namespace hyperadapters
