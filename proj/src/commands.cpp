#include "hyperadapters/commands.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "hyperadapters/checkpoint.hpp"

namespace hyperadapters {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::unique_ptr<AdaptedModel> build(const ExperimentConfig& config, const Corpus& corpus, const SchemeConfig& scheme,
                                    std::uint64_t seed) {
  return std::make_unique<AdaptedModel>(config.model, scheme, corpus.vocabulary(), corpus.pivot, seed);
}

}  // namespace

CountQuery count_query(const AdaptedModel& system) {
  const auto& s = system.scheme();
  const auto& m = system.model().config();
  CountQuery q;
  q.kind = s.kind;
  q.n_languages = system.vocabulary().n_languages;
  q.n_layers = m.layout().total();
  q.d_model = m.d_model;
  q.bottleneck = s.bottleneck;
  q.multi_parallel = s.multi_parallel;
  if (s.kind == SchemeKind::Hyper) {
    q.hidden = s.hyper.hidden;
    q.emb_dim = s.hyper.emb_dim;
    q.res_blocks = s.hyper.res_blocks;
  }
  return q;
}

int cmd_gen_data(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  const auto corpus = materialize_corpus(config);
  write_corpus(corpus, out);
  log << "wrote " << corpus.n_languages() << " languages to " << out.string() << " (pivot "
      << corpus.languages[static_cast<std::size_t>(corpus.pivot)].name << ")\n";
  std::map<LangId, std::size_t> per_language;
  for (const auto& [pair, n] : corpus.direction_sizes()) per_language[pair.source == corpus.pivot ? pair.target : pair.source] += n;
  for (const auto& [lang, n] : per_language)
    log << "  " << std::left << std::setw(10) << corpus.languages[static_cast<std::size_t>(lang)].name << n
        << " training pairs\n";
  log << "  valid " << corpus.valid.size() << ", test " << corpus.test.size() << ", zero-shot " << corpus.zero_shot.size()
      << ", filtered " << corpus.filtered << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& config, const fs::path& run_dir, bool force, std::ostream& log) {
  config.validate();
  const auto corpus = materialize_corpus(config);
  if (fs::exists(run_dir)) {
    if (!force) throw std::runtime_error("run directory " + run_dir.string() + " exists (use --force to replace it)");
    fs::remove_all(run_dir);
  }
  auto system = build(config, corpus, config.scheme, config.seed);
  fs::create_directories(run_dir);
  write_text(run_dir / "config.ini", config.to_ini());

  const auto result = train(*system, corpus, config.train);
  std::ostringstream metrics;
  write_metrics_jsonl(metrics, result.records, config.scheme);
  write_text(run_dir / "metrics.jsonl", metrics.str());

  json header{{"config_hash", config.hash()}, {"manifest_hash", manifest_hash(corpus)}, {"seed", config.seed}};
  const auto params = system->parameters();
  auto last = header;
  last["step"] = result.records.empty() ? 0 : result.records.back().step;
  save_checkpoint(run_dir / "last.ckpt", last.dump(), params);
  if (!result.best_parameters.empty()) {
    restore_best(*system, result);
    auto best = header;
    best["step"] = result.best_step;
    best["val_loss"] = *result.best_val_loss;
    save_checkpoint(run_dir / "best.ckpt", best.dump(), params);
  }

  json summary = header;
  summary["steps"] = result.records.size();
  summary["best_step"] = result.best_step;
  summary["best_val_loss"] = result.best_val_loss ? json(*result.best_val_loss) : json(nullptr);
  summary["diverged_at"] = result.diverged_at ? json(*result.diverged_at) : json(nullptr);
  summary["extra_params"] = system->adapter_parameter_count();
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");

  log << "trained " << scheme_name(config.scheme.kind) << " for " << result.records.size() << " steps into "
      << run_dir.string() << '\n';
  if (result.best_val_loss) log << "  best validation loss " << fixed(*result.best_val_loss) << " at step " << result.best_step << '\n';
  if (result.diverged()) {
    log << "  diverged at step " << *result.diverged_at << '\n';
    return kExitFailed;
  }
  return kExitOk;
}

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "config.ini")) throw std::runtime_error("no trained run at " + run_dir.string());
  LoadedRun run{ExperimentConfig::load(run_dir / "config.ini"), {}, nullptr};
  run.corpus = materialize_corpus(run.config);
  run.system = build(run.config, run.corpus, run.config.scheme, run.config.seed);
  const auto ckpt = fs::exists(run_dir / "best.ckpt") ? run_dir / "best.ckpt" : run_dir / "last.ckpt";
  restore_parameters(read_checkpoint(ckpt), run.system->parameters());
  return run;
}

int cmd_probe(const std::string& name, const ExperimentConfig& base, const std::optional<fs::path>& run_dir,
              const fs::path& out_dir, std::ostream& log) {
  static const std::vector<std::string> kProbes{"stability", "audit", "convergence", "swap",
                                                "redundancy", "embeddings", "zeroshot"};
  if (std::find(kProbes.begin(), kProbes.end(), name) == kProbes.end())
    throw std::invalid_argument("unknown probe '" + name + "'");

  std::optional<LoadedRun> loaded;
  if (run_dir) loaded = load_run(*run_dir);
  const ExperimentConfig& config = loaded ? loaded->config : base;
  config.validate();
  const Corpus corpus = loaded ? loaded->corpus : materialize_corpus(config);
  const auto prov = provenance_of(config, corpus);
  auto report = [&](const std::string& csv, const json& summary) {
    const auto dir = write_probe_report(out_dir, name, prov, csv, summary);
    log << "report written to " << dir.string() << '\n';
  };

  if (name == "stability") {
    const auto r = stability_sweep(corpus, config);
    log << "d_h   rescale  final_loss  final_max_sd  diverged\n";
    for (const auto& row : r.summary()["configurations"]) {
      log << std::left << std::setw(6) << row["d_h"].get<int>() << std::setw(9) << (row["rescale"].get<bool>() ? "true" : "false")
          << std::setw(12) << row["final_loss"].dump() << std::setw(14) << row["final_max_act_sd"].dump()
          << row["diverged_runs"].get<int>() << '\n';
    }
    report(r.csv(), r.summary());
    return kExitOk;
  }
  if (name == "audit") {
    auto system = loaded ? std::move(loaded->system) : build(config, corpus, config.scheme, config.seed);
    const auto q = count_query(*system);
    const auto a = audit_params(q, system->adapters() ? system->adapters()->parameters() : ParameterList{});
    std::ostringstream csv;
    write_audit_csv_header(csv);
    write_audit_csv_row(csv, a);
    json rows = json::array();
    log << "component              formula    enumerated\n";
    for (const auto& row : a.rows) {
      log << std::left << std::setw(22) << row.component << std::setw(11) << row.formula << row.enumerated
          << (row.formula == row.enumerated ? "" : "   MISMATCH") << '\n';
      rows.push_back({{"component", row.component}, {"formula", row.formula}, {"enumerated", row.enumerated}});
    }
    log << "total                 " << std::setw(11) << a.formula << a.enumerated << '\n';
    report(csv.str(), {{"scheme", scheme_name(q.kind)},
                       {"formula", a.formula},
                       {"enumerated", a.enumerated},
                       {"exact", a.exact()},
                       {"components", rows}});
    return a.exact() ? kExitOk : kExitFailed;
  }
  if (name == "convergence") {
    std::vector<std::pair<std::string, SchemeConfig>> schemes;
    std::size_t reference_budget = 0;
    for (auto kind : config.probe.schemes) {
      auto s = config.scheme;
      s.kind = kind;
      if (kind == SchemeKind::Hyper && reference_budget > 0)
        s.hyper.hidden = matched_hidden(config, corpus.n_languages(), reference_budget);
      if (schemes.empty()) reference_budget = build(config, corpus, s, 0)->adapter_parameter_count();
      schemes.emplace_back(scheme_name(kind), s);
    }
    const auto r = convergence_compare(corpus, config, schemes);
    log << "reference " << r.reference_label << " best validation loss " << fixed(r.reference) << '\n';
    for (const auto& c : r.curves)
      log << "  " << std::left << std::setw(10) << c.label << std::setw(10) << c.extra_params << "best "
          << fixed(c.best) << "  crossing " << (c.crossing ? std::to_string(*c.crossing) : "inf") << '\n';
    report(r.csv(), r.summary());
    return kExitOk;
  }
  if (name == "swap") {
    if (config.probe.swaps.empty()) throw std::invalid_argument("probe.swaps lists no language:related:distant entries");
    std::string csv;
    json summary = json::array();
    auto emit = [&](const SwapReport& r, std::optional<std::uint64_t> seed) {
      for (const auto& row : r.rows)
        log << std::left << std::setw(8) << r.scheme << std::setw(8) << row.probe.language << "org " << fixed(row.org)
            << "  sim " << fixed(row.sim) << "  dist " << fixed(row.dist) << "  acc " << fixed(row.acc()) << '\n';
      auto c = r.csv();
      csv += csv.empty() ? c : c.substr(c.find('\n') + 1);
      auto s = r.summary();
      s["seed"] = seed ? json(*seed) : json(nullptr);
      summary.push_back(s);
    };
    if (loaded) {
      emit(adapter_swap_eval(*loaded->system, corpus, config.probe.swaps), std::nullopt);
    } else {
      for (auto kind : config.probe.schemes) {
        if (kind == SchemeKind::None) continue;
        auto s = config.scheme;
        s.kind = kind;
        for (auto seed : config.probe.seeds) {
          auto t = train_scheme(corpus, config, s, seed);
          emit(adapter_swap_eval(*t.system, corpus, config.probe.swaps), seed);
        }
      }
    }
    report(csv, {{"runs", summary}});
    return kExitOk;
  }
  if (name == "redundancy") {
    if (config.probe.fragments.empty()) throw std::invalid_argument("probe.fragments lists no language:splits entries");
    const auto fragmented = fragment(corpus, config.probe.fragments, derive_seed(config.seed, "probe.fragment"));
    const auto r = redundancy_experiment(corpus, fragmented, config);
    log << "scheme    original  fragmented  delta\n";
    for (const auto& row : r.rows)
      log << std::left << std::setw(10) << row.scheme << std::setw(10) << fixed(row.original) << std::setw(12)
          << fixed(row.fragmented) << fixed(row.delta()) << '\n';
    report(r.csv(), r.summary());
    return kExitOk;
  }
  if (name == "embeddings") {
    std::vector<RelatednessReport> reports;
    const bool by_origin = !corpus.fragments.empty();
    if (loaded) {
      if (!loaded->system->hyper()) throw std::invalid_argument("embeddings probe needs a hyper-adapter run");
      reports.push_back(embedding_relatedness(*loaded->system->hyper(), corpus, by_origin));
    } else {
      auto s = config.scheme;
      s.kind = SchemeKind::Hyper;
      for (auto seed : config.probe.seeds) {
        auto t = train_scheme(corpus, config, s, seed);
        reports.push_back(embedding_relatedness(*t.system->hyper(), corpus, by_origin));
      }
    }
    std::string csv;
    json runs = json::array();
    double gap = 0.0;
    for (const auto& r : reports) {
      auto c = r.csv();
      csv += csv.empty() ? c : c.substr(c.find('\n') + 1);
      runs.push_back(r.summary());
      gap += r.gap() / static_cast<double>(reports.size());
      log << "within " << fixed(r.within) << "  between " << fixed(r.between) << "  gap " << fixed(r.gap()) << '\n';
    }
    report(csv, {{"runs", runs}, {"mean_gap", gap}, {"grouping", by_origin ? "origin" : "family"}});
    return kExitOk;
  }
  // zeroshot
  const auto r = zero_shot_eval(corpus, config);
  log << "variant       direct  pivot   supervised\n";
  for (const auto& row : r.rows)
    log << std::left << std::setw(14) << row.variant << std::setw(8) << (row.applicable ? fixed(row.direct, 3) : "n/a")
        << std::setw(8) << fixed(row.pivot, 3) << fixed(row.supervised, 3) << '\n';
  report(r.csv(), r.summary());
  return kExitOk;
}

int cmd_audit_params(const CountQuery& query, bool enumerate, std::ostream& log) {
  const auto breakdown = count_breakdown(query);
  for (const auto& [component, n] : breakdown) log << std::left << std::setw(22) << component << n << '\n';
  const auto total = count_params(query);
  log << "total " << total << " (" << fixed(static_cast<double>(total) / 1e6, 2) << "M)\n";
  if (!enumerate) return kExitOk;
  const int n_enc = static_cast<int>(query.n_layers / 2);
  const LayerLayout layout{n_enc, static_cast<int>(query.n_layers) - n_enc};
  const AdapterConfig acfg{static_cast<int>(query.d_model), static_cast<int>(query.bottleneck)};
  auto rng = make_rng(0, "audit");
  ParameterList params;
  const auto n = static_cast<int>(query.n_languages);
  switch (query.kind) {
    case SchemeKind::None:
      break;
    case SchemeKind::Language:
      params = RoutingScheme::languages(acfg, layout, n, rng).parameters();
      break;
    case SchemeKind::Pair:
      params = RoutingScheme::pairs(acfg, layout, query.multi_parallel ? all_directed_pairs(n) : pivot_centric_pairs(n, 0), rng)
                   .parameters();
      break;
    case SchemeKind::Hyper: {
      HyperConfig h;
      h.hidden = static_cast<int>(*query.hidden);
      h.emb_dim = static_cast<int>(query.emb_dim);
      h.res_blocks = static_cast<int>(query.res_blocks);
      params = HyperNetwork(h, acfg, layout, n, rng).parameters();
      break;
    }
  }
  const auto a = audit_params(query, params);
  log << "enumerated " << a.enumerated << (a.exact() ? " (exact)" : " (MISMATCH)") << '\n';
  return a.exact() ? kExitOk : kExitFailed;
}

}  // namespace hyperadapters
