// Acceptance run: one PASS/FAIL line per criterion.
//
//   hyperadapters-acceptance [--only 1,2,...] [--expect-fail 1,4,...]
//
// Exit status is 0 when the failing set is a subset of --expect-fail, 1
// otherwise. Criteria that are known to fail are still run and reported; one
// that throws always counts as unexpected.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <unistd.h>

#include "hyperadapters/commands.hpp"
#include "hyperadapters/grad_check.hpp"
#include "hyperadapters/ops.hpp"

namespace ha = hyperadapters;
namespace fs = std::filesystem;
namespace ops = hyperadapters::ops;
using ha::Route;
using ha::Side;
using ha::Tape;
using ha::Tensor;
using ha::Var;

namespace {

// Six languages: a pivot plus two families, siblings at relatedness 0.9.
constexpr const char* kExperiment = R"([run]
seed = 1

[corpus]
concept_vocab = 20
pivot = en
min_length = 3
max_length = 8
valid = 40
test = 40
zero_shot = 40

[language.en]
sentences = 0
[language.a0]
sentences = 300
[language.a1]
parent = a0
relatedness = 0.9
sentences = 300
[language.a2]
parent = a0
relatedness = 0.9
sentences = 300
[language.b0]
sentences = 300
[language.b1]
parent = b0
relatedness = 0.9
sentences = 300

[model]
enc_layers = 1
dec_layers = 1
d_model = 32
d_ff = 64
heads = 4
dropout = 0.1

[scheme]
kind = hyper
bottleneck = 8
hidden = 64
emb_dim = 50
res_blocks = 2

[train]
peak_lr = 0.003
warmup = 50
steps = 1000
token_budget = 1000
eval_every = 50

[probe]
seeds = 1,2
d_h = 64,256,1024
rescale = both
fragments = a0:5,a1:5,a2:5,b0:5,b1:5
swaps = a1:a2:b1;a2:a1:b0;b1:b0:a1
)";

ha::ExperimentConfig experiment() {
  auto c = ha::ExperimentConfig::from_ini(kExperiment);
  c.validate();
  return c;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

double sd_of(const Tensor& t) { return ha::stddev(t.data()); }

Var weighted_sum(const Var& x, std::uint64_t seed) {
  ha::Rng rng(seed);
  return ops::sum(ops::mul(x, x.tape().constant(ha::random_normal(x.shape(), 1.0, rng))));
}

// ---------------------------------------------------------------------------

Outcome parameter_counts() {
  auto table = [](ha::SchemeKind kind, std::optional<std::int64_t> dh = std::nullopt) {
    ha::CountQuery q;
    q.kind = kind;
    q.n_languages = 51;
    q.n_layers = 12;
    q.d_model = 512;
    q.bottleneck = 128;
    q.hidden = dh;
    return q;
  };
  struct Row {
    std::string label;
    ha::CountQuery q;
    double reference;
  };
  const std::vector<Row> rows{{"lang", table(ha::SchemeKind::Language), 81e6},
                              {"hyper-102", table(ha::SchemeKind::Hyper, 102), 14e6},
                              {"hyper-204", table(ha::SchemeKind::Hyper, 204), 27e6},
                              {"hyper-612", table(ha::SchemeKind::Hyper, 612), 83e6}};
  bool ok = true;
  std::ostringstream d;
  for (const auto& r : rows) {
    const auto n = ha::count_params(r.q);
    const double gap = (static_cast<double>(n) - r.reference) / r.reference;
    ok &= std::abs(gap) <= 0.02;
    d << r.label << " " << num(n / 1e6) << "M (" << (gap >= 0 ? "+" : "") << num(100 * gap, 2) << "%) ";
  }

  ha::Rng rng(2024);
  std::uniform_int_distribution<int> langs(2, 7), enc(1, 3), dz(2, 16), db(1, 6), dh(1, 12), emb(1, 8), res(0, 3);
  int exact = 0, total = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const int N = langs(rng), ne = enc(rng), nd = enc(rng);
    const ha::AdapterConfig ac{dz(rng), db(rng)};
    const ha::LayerLayout layout{ne, nd};
    ha::CountQuery q{ha::SchemeKind::Language, N, ne + nd, ac.d_model, ac.bottleneck};
    exact += ha::audit_params(q, ha::RoutingScheme::languages(ac, layout, N, rng).parameters()).exact();
    q.kind = ha::SchemeKind::Pair;
    exact += ha::audit_params(q, ha::RoutingScheme::pairs(ac, layout, ha::pivot_centric_pairs(N, 0), rng).parameters())
                 .exact();
    q.multi_parallel = true;
    exact += ha::audit_params(q, ha::RoutingScheme::pairs(ac, layout, ha::all_directed_pairs(N), rng).parameters())
                 .exact();
    ha::HyperConfig hc;
    hc.hidden = dh(rng);
    hc.emb_dim = emb(rng);
    hc.res_blocks = res(rng);
    q.kind = ha::SchemeKind::Hyper;
    q.multi_parallel = false;
    q.hidden = hc.hidden;
    q.emb_dim = hc.emb_dim;
    q.res_blocks = hc.res_blocks;
    exact += ha::audit_params(q, ha::HyperNetwork(hc, ac, layout, N, rng).parameters()).exact();
    total += 4;
  }
  ok &= exact == total;
  d << "| enumeration exact " << exact << "/" << total;
  return {ok, d.str()};
}

Outcome gradients() {
  constexpr double kTol = 1e-4;
  double worst_primitive = 0.0;
  std::string worst_name;
  for (int trial = 0; trial < 3; ++trial) {
    ha::Rng rng(500 + trial);
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto rnd = [&](ha::Shape s) { return ha::random_normal(std::move(s), 1.0, rng); };
    struct Case {
      std::string name;
      std::vector<Tensor> inputs;
      ha::ScalarFunction f;
    };
    std::vector<Case> cases;
    auto add = [&](std::string name, std::vector<Tensor> inputs, ha::ScalarFunction f) {
      cases.push_back({std::move(name), std::move(inputs), std::move(f)});
    };
    add("matmul", std::vector{rnd({m, k}), rnd({k, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::matmul(x[0], x[1]), 1); });
    add("matmul_nt", std::vector{rnd({m, k}), rnd({n, k})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::matmul_nt(x[0], x[1]), 2); });
    add("add", std::vector{rnd({m, n}), rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::add(x[0], x[1]), 3); });
    add("add_bias", std::vector{rnd({m, n}), rnd({n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::add_bias(x[0], x[1]), 4); });
    add("mul", std::vector{rnd({m, n}), rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::mul(x[0], x[1]), 5); });
    add("scale", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::scale(x[0], 0.3), 6); });
    add("relu", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::relu(x[0]), 7); });
    add("concat", std::vector{rnd({m, k}), rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::concat(x), 8); });
    add("concat_rows", std::vector{rnd({m, k}), rnd({n, k})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::concat_rows(x), 9); });
    add("reshape", std::vector{rnd({m, n})}, [m, n](Tape&, std::span<const Var> x) {
      return weighted_sum(ops::reshape(x[0], {m * n}), 10);
    });
    add("gather_rows", std::vector{rnd({m, n})}, [m](Tape&, std::span<const Var> x) {
      const std::vector<std::int64_t> idx{0, static_cast<std::int64_t>(m - 1), -1};
      return weighted_sum(ops::gather_rows(x[0], idx), 11);
    });
    add("layer_norm", std::vector{rnd({m, n + 1}), rnd({n + 1}), rnd({n + 1})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::layer_norm(x[0], x[1], x[2]), 12); });
    add("softmax", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::softmax(x[0]), 13); });
    add("log_softmax", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return weighted_sum(ops::log_softmax(x[0]), 14); });
    add("mean", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return ops::mul(ops::mean(x[0]), ops::mean(x[0])); });
    add("variance", std::vector{rnd({m, n})},
                       [](Tape&, std::span<const Var> x) { return ops::variance(x[0]); });
    add("label_smoothed_ce", std::vector{rnd({m, n + 1})}, [m, n](Tape&, std::span<const Var> x) {
      std::vector<std::int64_t> tgt(m);
      for (std::size_t i = 0; i < m; ++i) tgt[i] = i % 3 == 2 ? -1 : static_cast<std::int64_t>(i % (n + 1));
      tgt[0] = 0;
      return ops::label_smoothed_cross_entropy(x[0], tgt, 0.1);
    });
    const std::size_t B = 2, Tq = m % 4 + 1, Tk = n % 4 + 2, d = 4;
    for (bool causal : {false, true}) {
      const std::size_t tk = causal ? Tq : Tk;
      add(causal ? "attention_causal" : "attention",
                         std::vector{rnd({B * Tq, d}), rnd({B * tk, d}), rnd({B * tk, d})},
                         [=](Tape&, std::span<const Var> x) {
                           ops::AttentionLayout layout{B, Tq, tk, 2, causal, {tk, tk > 1 ? tk - 1 : 1}};
                           return weighted_sum(ops::attention(x[0], x[1], x[2], layout), 15);
                         });
    }
    for (auto& c : cases) {
      const auto r = ha::grad_check(c.f, c.inputs);
      if (r.max_relative_error >= worst_primitive) {
        worst_primitive = r.max_relative_error;
        worst_name = c.name;
      }
    }
  }

  // Tiny model with per-language adapters and one with a hyper-network.
  ha::ModelConfig mc;
  mc.n_enc_layers = 1;
  mc.n_dec_layers = 1;
  mc.d_model = 8;
  mc.d_ff = 12;
  mc.n_heads = 2;
  mc.dropout = 0.0;
  const ha::Vocabulary vocab{2, 6};
  mc.vocab_size = vocab.size();
  const std::vector<ha::Example> ex{{{0, 1}, {vocab.symbol(0), vocab.symbol(3)}, {vocab.symbol(1), vocab.symbol(4)}},
                                    {{1, 0}, {vocab.symbol(5)}, {vocab.symbol(2), vocab.symbol(0)}}};
  const auto batch = ha::make_batch(ex, vocab);
  ha::Rng rng(77);
  ha::TranslationModel model(mc, rng);

  auto lang = ha::RoutingScheme::languages({mc.d_model, 3}, mc.layout(), 2, rng);
  // Nudge the zero-initialised up-projections so the adapter branch is live.
  for (const auto& p : lang.parameters())
    for (double& v : p->value().data()) v += std::normal_distribution<double>(0.0, 0.3)(rng);
  ha::ParameterList adapter_path = lang.parameters();
  for (const auto& p : model.parameters())
    if (!p->name().ends_with(".k.b")) adapter_path.push_back(p);
  const auto regular = ha::grad_check_parameters(
      [&](Tape& t) { return model.loss(t, batch, &lang, 0.1, {}); }, adapter_path, {1e-6, 1e-8}, 4);

  ha::HyperConfig hc;
  hc.hidden = 6;
  hc.emb_dim = 4;
  hc.res_blocks = 1;
  ha::HyperNetwork net(hc, {mc.d_model, 3}, mc.layout(), 2, rng);
  const auto hyper = ha::grad_check_parameters([&](Tape& t) { return model.loss(t, batch, &net, 0.1, {}); },
                                               {net.language_embeddings(), net.layer_embeddings()}, {1e-4, 1e-8});

  const bool ok = worst_primitive < kTol && regular.max_relative_error < kTol && hyper.max_relative_error < kTol;
  return {ok, "primitives max " + num(worst_primitive, 3) + " (" + worst_name + ") | adapters " +
                  num(regular.max_relative_error, 3) + " | hyper embeddings " + num(hyper.max_relative_error, 3)};
}

Outcome rescaling() {
  bool ok = true;
  std::ostringstream d;
  for (int dh : {64, 256, 1024}) {
    ha::HyperConfig on, off;
    on.hidden = off.hidden = dh;
    on.emb_dim = off.emb_dim = 8;
    off.rescale = false;
    ha::Rng ra(5), rb(5);
    const ha::AdapterConfig ac{32, 8};
    ha::HyperNetwork a(on, ac, {1, 1}, 3, ra), b(off, ac, {1, 1}, 3, rb);
    ha::Rng rng(9);
    double sd_on = 0.0, sd_off = 0.0;
    const int samples = 500;
    for (int i = 0; i < samples; ++i) {
      const auto h = ha::random_normal({static_cast<std::size_t>(dh)}, 1.0, rng);
      sd_on += sd_of(a.generate_adapter(h).down);
      sd_off += sd_of(b.generate_adapter(h).down);
    }
    const double ratio = sd_off / sd_on, rel = ratio / std::sqrt(dh) - 1.0;
    ok &= std::abs(rel) <= 0.02;
    d << "d_h " << dh << " ratio " << num(ratio) << " vs " << num(std::sqrt(dh)) << "  ";
  }
  return {ok, d.str()};
}

Outcome stability(const ha::ExperimentConfig& base) {
  auto config = base;
  config.set("train.steps", "500");
  const auto corpus = ha::materialize_corpus(config);
  const auto r = ha::stability_sweep(corpus, config);
  // A run that stopped early on a non-finite value never reaches the final
  // step; its activation SD there counts as unbounded.
  auto final_sd = [&](int dh, bool rescale) {
    for (const auto& run : r.runs)
      if (run.d_h == dh && run.rescale == rescale && run.loss.size() < static_cast<std::size_t>(config.train.total_steps))
        return std::numeric_limits<double>::infinity();
    return r.final_max_sd(dh, rescale);
  };
  auto final_loss = [&](int dh) {
    for (const auto& run : r.runs)
      if (run.d_h == dh && run.rescale && run.loss.size() < static_cast<std::size_t>(config.train.total_steps))
        return std::numeric_limits<double>::infinity();
    return r.final_loss(dh, true);
  };
  const auto& dhs = config.probe.d_h;
  bool sd_up = true, loss_flat = true;
  std::ostringstream d;
  d << "no-rescale SD";
  for (std::size_t i = 0; i < dhs.size(); ++i) {
    d << " " << num(final_sd(dhs[i], false));
    if (i > 0) sd_up &= final_sd(dhs[i], false) > final_sd(dhs[i - 1], false);
  }
  d << " | rescale loss";
  for (std::size_t i = 0; i < dhs.size(); ++i) {
    d << " " << num(final_loss(dhs[i]));
    if (i > 0) loss_flat &= final_loss(dhs[i]) <= final_loss(dhs[i - 1]) + 0.05;
  }
  d << " | rescale SD";
  for (int dh : dhs) d << " " << num(final_sd(dh, true));
  return {sd_up && loss_flat, d.str()};
}

Outcome zero_heads() {
  ha::ModelConfig mc;
  mc.n_enc_layers = 2;
  mc.n_dec_layers = 2;
  mc.d_model = 16;
  mc.d_ff = 32;
  mc.n_heads = 4;
  mc.dropout = 0.0;
  const ha::Vocabulary vocab{3, 10};
  mc.vocab_size = vocab.size();
  ha::Rng rng(3);
  ha::TranslationModel model(mc, rng);
  ha::HyperConfig hc;
  hc.hidden = 32;
  hc.emb_dim = 8;
  ha::HyperNetwork net(hc, {mc.d_model, 4}, mc.layout(), 3, rng);
  for (const auto* p : {&net.head_down(), &net.head_up(), &net.head_gain(), &net.head_bias()}) (*p)->value().fill(0.0);

  bool ok = true;
  std::size_t routes = 0;
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 3; ++t)
      for (Side side : {Side::Encoder, Side::Decoder})
        for (int l = 0; l < 2; ++l) {
          const auto z = ha::random_normal({5, 16}, 2.0, rng);
          ok &= ha::adapter_forward(z, net.generate({s, t, side, l})).identical(z);
          ++routes;
        }
  std::vector<ha::Example> ex;
  std::uniform_int_distribution<int> sym(0, 9), len(1, 6), lang(0, 2);
  for (int i = 0; i < 8; ++i) {
    ha::Example e{{lang(rng), lang(rng)}, {}, {}};
    for (int j = len(rng); j > 0; --j) e.source.push_back(vocab.symbol(sym(rng)));
    for (int j = len(rng); j > 0; --j) e.target.push_back(vocab.symbol(sym(rng)));
    ex.push_back(e);
  }
  const auto batch = ha::make_batch(ex, vocab);
  Tape t1(false), t2(false);
  const auto with = model.loss(t1, batch, &net, 0.1, {}).value();
  const auto without = model.loss(t2, batch, nullptr, 0.1, {}).value();
  const bool same_loss = with.identical(without);
  return {ok && same_loss, std::to_string(routes) + " routes identity " + (ok ? "exact" : "broken") +
                               " | model loss with vs without adapters " + (same_loss ? "bitwise equal" : "differs")};
}

Outcome aware_init() {
  ha::HyperConfig hc;
  hc.hidden = 64;
  hc.emb_dim = 50;
  const ha::AdapterConfig ac{32, 8};
  ha::Rng rng(4);
  ha::HyperNetwork net(hc, ac, {2, 2}, 6, rng);
  ha::Rng init_rng(41), ref_rng(41);
  net.hypernet_aware_init(init_rng);
  const auto ref = ha::reference_adapter_init(ac, ref_rng);
  const auto probe = net.generate_unshifted(ha::HyperNetwork::probe_route());
  const double target = ha::down_init_sd(ac), target_up = ha::up_init_sd(ac);
  const bool exact = std::abs(sd_of(probe.down) / sd_of(ref.down) - 1.0) < 1e-12 &&
                     std::abs(sd_of(probe.up) / sd_of(ref.up) - 1.0) < 1e-12;
  ha::Rng pick(40);
  std::uniform_int_distribution<int> lang(0, 5), layer(0, 1), side(0, 1);
  double lo = 1e9, hi = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Route r{lang(pick), lang(pick), side(pick) ? Side::Decoder : Side::Encoder, layer(pick)};
    const auto w = net.generate_unshifted(r);
    for (double ratio : {sd_of(w.down) / target, sd_of(w.up) / target_up}) {
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  const bool bounded = lo >= 0.5 && hi <= 2.0;
  return {exact && bounded, std::string("probe route ") + (exact ? "exact" : "off") + " | 20 routes SD ratio in [" +
                                num(lo, 3) + ", " + num(hi, 3) + "]"};
}

Outcome masking() {
  ha::HyperConfig hc;
  hc.hidden = 32;
  hc.emb_dim = 8;
  hc.dec_policy = ha::MaskPolicy::parse("t");
  ha::Rng rng(6);
  const int n = 5;
  ha::HyperNetwork net(hc, {16, 4}, {2, 2}, n, rng);
  std::vector<Route> routes;
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < n; ++t)
      for (Side side : {Side::Encoder, Side::Decoder})
        for (int l = 0; l < 2; ++l) routes.push_back({s, t, side, l});
  bool invariant = true;
  for (int t = 0; t < n; ++t)
    for (int l = 0; l < 2; ++l) {
      const auto ref = net.generate({0, t, Side::Decoder, l});
      for (int s = 1; s < n; ++s) invariant &= net.generate({s, t, Side::Decoder, l}).identical(ref);
    }
  const auto cache = net.cache_weights(routes);
  bool cached = true;
  for (const auto& r : routes) cached &= cache.at(net.masked_key(r)).identical(net.generate(r));
  return {invariant && cached, std::string("decoder weights across sources ") + (invariant ? "identical" : "differ") +
                                   " | cache vs live over " + std::to_string(routes.size()) + " routes " +
                                   (cached ? "identical" : "differ")};
}

Outcome redundancy(const ha::ExperimentConfig& config) {
  const auto corpus = ha::materialize_corpus(config);
  const auto fragmented = ha::fragment(corpus, config.probe.fragments, ha::derive_seed(config.seed, "probe.fragment"));
  const auto r = ha::redundancy_experiment(corpus, fragmented, config);
  const auto& hyper = r.row(ha::SchemeKind::Hyper);
  const auto& lang = r.row(ha::SchemeKind::Language);
  std::ostringstream d;
  for (const auto& row : r.rows) d << row.scheme << " " << num(row.original) << "->" << num(row.fragmented) << "  ";
  d << "| delta hyper " << num(hyper.delta()) << " vs language " << num(lang.delta());
  return {hyper.delta() <= lang.delta(), d.str()};
}

Outcome relatedness(const ha::ExperimentConfig& config) {
  const auto corpus = ha::materialize_corpus(config);
  double within = 0.0, between = 0.0, acc_hyper = 0.0, acc_pair = 0.0;
  const auto seeds = config.probe.seeds;
  for (auto seed : seeds) {
    auto s = config.scheme;
    s.kind = ha::SchemeKind::Hyper;
    auto hyper = ha::train_scheme(corpus, config, s, seed);
    const auto rel = ha::embedding_relatedness(*hyper.system->hyper(), corpus);
    within += rel.within / seeds.size();
    between += rel.between / seeds.size();
    acc_hyper += ha::adapter_swap_eval(*hyper.system, corpus, config.probe.swaps).mean_acc() / seeds.size();
    s.kind = ha::SchemeKind::Pair;
    auto pair = ha::train_scheme(corpus, config, s, seed);
    acc_pair += ha::adapter_swap_eval(*pair.system, corpus, config.probe.swaps).mean_acc() / seeds.size();
  }
  return {within > between && acc_hyper > acc_pair, "cosine within " + num(within, 3) + " vs between " +
                                                        num(between, 3) + " | swap Acc hyper " + num(acc_hyper, 3) +
                                                        " vs pair " + num(acc_pair, 3)};
}

Outcome zero_shot(const ha::ExperimentConfig& config) {
  const auto corpus = ha::materialize_corpus(config);
  const auto r = ha::zero_shot_eval(corpus, config);
  const auto &full = r.row("s,t|s,t"), &src = r.row("s|t"), &enc_full = r.row("s,t|t");
  std::ostringstream d;
  d << "direct s|t " << num(src.direct, 3) << " vs s,t|s,t " << num(full.direct, 3) << " | supervised s,t|t "
    << num(enc_full.supervised, 3) << " vs s|t " << num(src.supervised, 3);
  return {src.direct > full.direct && enc_full.supervised >= src.supervised, d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

Outcome determinism(const ha::ExperimentConfig& base, const fs::path& scratch) {
  auto config = base;
  config.set("train.steps", "40");
  config.set("train.warmup", "10");
  config.set("train.eval_every", "20");
  config.set("probe.d_h", "16,32");
  config.set("probe.rescale", "true");
  config.set("probe.seeds", "3");
  std::ostringstream log;
  bool same = true;
  std::vector<std::string> compared;
  ha::cmd_train(config, scratch / "train-a", true, log);
  ha::cmd_train(config, scratch / "train-b", true, log);
  for (const char* file : {"metrics.jsonl", "summary.json", "best.ckpt", "last.ckpt"}) {
    same &= slurp(scratch / "train-a" / file) == slurp(scratch / "train-b" / file);
    compared.emplace_back(file);
  }
  for (const char* probe : {"stability", "embeddings"}) {
    for (const char* tag : {"a", "b"}) ha::cmd_probe(probe, config, std::nullopt, scratch / ("probe-" + std::string(tag)), log);
    const auto leaf = std::string(probe) + "-" + config.hash();
    same &= slurp(scratch / "probe-a" / leaf / (std::string(probe) + ".csv")) ==
            slurp(scratch / "probe-b" / leaf / (std::string(probe) + ".csv"));
    same &= slurp(scratch / "probe-a" / leaf / "summary.json") == slurp(scratch / "probe-b" / leaf / "summary.json");
    compared.push_back(std::string(probe) + " report");
  }
  std::string list;
  for (const auto& c : compared) list += (list.empty() ? "" : ", ") + c;
  return {same, "reruns byte-identical: " + list};
}

std::set<int> parse_ids(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');)
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only, expect_fail;
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--expect-fail", expect_fail, "Criteria allowed to fail");
  CLI11_PARSE(app, argc, argv);
  const auto selected = parse_ids(only), allowed = parse_ids(expect_fail);

  const auto scratch = fs::temp_directory_path() / ("hyperadapters-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(scratch);
  const auto config = experiment();

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter counts", parameter_counts},
      {"gradient correctness", gradients},
      {"rescaling statistics", rescaling},
      {"stability sweep", [&] { return stability(config); }},
      {"zero-head identity", zero_heads},
      {"init correction", aware_init},
      {"masking invariance", masking},
      {"redundancy", [&] { return redundancy(config); }},
      {"relatedness probes", [&] { return relatedness(config); }},
      {"zero-shot masking", [&] { return zero_shot(config); }},
      {"determinism", [&] { return determinism(config, scratch); }},
  };

  std::vector<int> failed;
  bool errored = false;  // a crash is never an expected failure
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      errored = true;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) failed.push_back(id);
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << criteria[i].first << ": " << o.detail
              << " [" << std::fixed << std::setprecision(1) << secs << "s]" << std::defaultfloat << std::endl;
  }
  fs::remove_all(scratch);

  bool unexpected = errored;
  for (int id : failed) unexpected |= !allowed.count(id);
  return unexpected ? 1 : 0;
}
