#include <iostream>

#include <CLI11.hpp>

#include "hyperadapters/commands.hpp"

namespace ha = hyperadapters;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Experiment config (INI)");
  cmd->add_option("--set", c.overrides, "Override a config key: section.key=value")->take_all();
  cmd->add_option("--seed", c.seed, "Run seed (run.seed)");
  cmd->add_option("--steps", c.steps, "Training steps (train.steps)");
}

ha::ExperimentConfig resolve(const Common& c) {
  ha::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = ha::ExperimentConfig::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  if (c.steps) cfg.set("train.steps", std::to_string(*c.steps));
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyper-adapter experiments on synthetic multilingual corpora"};
  app.require_subcommand(1);

  Common gen_c, train_c, probe_c;
  std::string gen_out, fragments;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  add_common(gen, gen_c);
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("--fragment", fragments, "Split languages, e.g. de:5,fr:2 (corpus.fragments)");

  std::string run_dir;
  bool force = false;
  auto* tr = app.add_subcommand("train", "Train one model into a run directory");
  add_common(tr, train_c);
  tr->add_option("-o,--run-dir", run_dir, "Run directory (default: <run.output>/train-<config hash>)");
  tr->add_flag("-f,--force", force, "Replace an existing run directory");

  std::string probe_name, probe_run, probe_out, d_h, rescale, seeds;
  auto* pr = app.add_subcommand("probe", "Run an analysis probe");
  add_common(pr, probe_c);
  pr->add_option("name", probe_name, "stability | audit | convergence | swap | redundancy | embeddings | zeroshot")
      ->required();
  pr->add_option("--run", probe_run, "Trained run directory (swap, embeddings, audit)");
  pr->add_option("-o,--out", probe_out, "Report directory (default: run.output)");
  pr->add_option("--dh", d_h, "Hidden sizes (probe.d_h)");
  pr->add_option("--rescale", rescale, "true | false | both (probe.rescale)");
  pr->add_option("--seeds", seeds, "Probe seeds (probe.seeds)");

  std::string scheme = "hyper";
  ha::CountQuery q;
  std::int64_t hidden = 0;
  bool enumerate = false;
  auto* au = app.add_subcommand("audit-params", "Closed-form extra-parameter count of a scheme");
  au->add_option("--scheme", scheme, "none | language | pair | hyper");
  au->add_option("--N", q.n_languages, "Languages")->required();
  au->add_option("--L", q.n_layers, "Transformer layers, encoder plus decoder")->required();
  au->add_option("--dz", q.d_model, "Model width")->required();
  au->add_option("--db", q.bottleneck, "Adapter bottleneck")->required();
  au->add_option("--dh", hidden, "Hyper-network hidden size");
  au->add_option("--emb", q.emb_dim, "Hyper-network embedding size");
  au->add_option("--blocks", q.res_blocks, "Hyper-network residual blocks");
  au->add_flag("--multi-parallel", q.multi_parallel, "Pair tables for every ordered pair");
  au->add_flag("--enumerate", enumerate, "Also instantiate the scheme and count its tensors");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (!fragments.empty()) gen_c.overrides.push_back("corpus.fragments=" + fragments);
      return ha::cmd_gen_data(resolve(gen_c), gen_out, std::cout);
    }
    if (tr->parsed()) {
      const auto cfg = resolve(train_c);
      const std::filesystem::path dir = run_dir.empty() ? cfg.output_dir / ("train-" + cfg.hash()) : std::filesystem::path(run_dir);
      return ha::cmd_train(cfg, dir, force, std::cout);
    }
    if (pr->parsed()) {
      if (!d_h.empty()) probe_c.overrides.push_back("probe.d_h=" + d_h);
      if (!rescale.empty()) probe_c.overrides.push_back("probe.rescale=" + rescale);
      if (!seeds.empty()) probe_c.overrides.push_back("probe.seeds=" + seeds);
      std::optional<std::filesystem::path> run;
      if (!probe_run.empty()) run = probe_run;
      ha::ExperimentConfig cfg;
      if (!run) cfg = resolve(probe_c);
      const std::filesystem::path out = probe_out.empty() ? (run ? *run : cfg.output_dir) : std::filesystem::path(probe_out);
      return ha::cmd_probe(probe_name, cfg, run, out, std::cout);
    }
    q.kind = ha::parse_scheme(scheme);
    if (hidden > 0) q.hidden = hidden;
    return ha::cmd_audit_params(q, enumerate, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ha::kExitError;
  }
}
