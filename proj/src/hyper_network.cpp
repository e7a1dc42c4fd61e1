#include "hyperadapters/hyper_network.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace hyperadapters {

void MaskPolicy::validate() const {
  if (!source && !target) throw std::invalid_argument("mask policy must keep at least one of {s, t}");
}

MaskPolicy MaskPolicy::parse(const std::string& text) {
  MaskPolicy p{false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" ()"));
    item.erase(item.find_last_not_of(" ()") + 1);
    if (item == "s") {
      p.source = true;
    } else if (item == "t") {
      p.target = true;
    } else if (!item.empty()) {
      throw std::invalid_argument("unknown mask policy entry '" + item + "' (expected s and/or t)");
    }
  }
  p.validate();
  return p;
}

std::string MaskPolicy::str() const {
  if (source && target) return "s,t";
  return source ? "s" : "t";
}

void HyperConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("hyper hidden size must be >= 1");
  if (emb_dim < 1) throw std::invalid_argument("hyper embedding size must be >= 1");
  if (res_blocks < 0) throw std::invalid_argument("hyper residual block count must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("hyper dropout must be in [0,1)");
  enc_policy.validate();
  dec_policy.validate();
}

namespace {

ParameterPtr make_param(std::string name, Tensor t) { return std::make_shared<Parameter>(std::move(name), std::move(t)); }

double inv_sqrt(int n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

HyperNetwork::HyperNetwork(HyperConfig cfg, AdapterConfig adapter, LayerLayout layout, int n_languages, Rng& rng)
    : cfg_(cfg), adapter_(adapter), layout_(layout), n_languages_(n_languages) {
  cfg_.validate();
  adapter_.validate();
  if (n_languages < 1) throw std::invalid_argument("hyper-network needs at least one language");
  const auto e = static_cast<std::size_t>(cfg_.emb_dim), dh = static_cast<std::size_t>(cfg_.hidden);
  const auto dz = static_cast<std::size_t>(adapter_.d_model), db = static_cast<std::size_t>(adapter_.bottleneck);

  lang_emb_ = make_param("hyper.lang_emb", random_normal({static_cast<std::size_t>(n_languages), e}, 1.0, rng));
  layer_emb_ = make_param("hyper.layer_emb", random_normal({static_cast<std::size_t>(layout.total()), e}, 1.0, rng));
  w_in_ = make_param("hyper.w_in", random_normal({3 * e, dh}, inv_sqrt(3 * cfg_.emb_dim), rng));
  for (int b = 0; b < cfg_.res_blocks; ++b) {
    const std::string p = "hyper.block" + std::to_string(b);
    blocks_.push_back({make_param(p + ".ln_gain", Tensor({dh}, 1.0)), make_param(p + ".ln_bias", Tensor({dh}, 0.0)),
                       make_param(p + ".w1", random_normal({dh, dh}, inv_sqrt(cfg_.hidden), rng)),
                       make_param(p + ".w2", random_normal({dh, dh}, inv_sqrt(cfg_.hidden), rng))});
  }
  // Head entries take the SD of the target tensor's own fan-in init, so a
  // unit-rms context generates weights on the regular adapter scale once the
  // 1/sqrt(hidden) rescale is applied.
  head_down_ = make_param("hyper.head_down", random_normal({dh, dz * db}, down_init_sd(adapter_), rng));
  head_up_ = make_param("hyper.head_up", random_normal({dh, db * dz}, up_init_sd(adapter_), rng));
  head_gain_ = make_param("hyper.head_gain", random_normal({dh, dz}, inv_sqrt(adapter_.d_model), rng));
  head_bias_ = make_param("hyper.head_bias", random_normal({dh, dz}, inv_sqrt(adapter_.d_model), rng));

  if (cfg_.aware_init) hypernet_aware_init(rng);
}

HyperKey HyperNetwork::masked_key(const Route& r) const {
  if (r.source < 0 || r.source >= n_languages_ || r.target < 0 || r.target >= n_languages_) {
    throw RoutingError("hyper-network: unregistered language in route " + std::to_string(r.source) + "->" +
                       std::to_string(r.target));
  }
  const int max_layer = r.side == Side::Encoder ? layout_.n_enc : layout_.n_dec;
  if (r.layer < 0 || r.layer >= max_layer) {
    throw RoutingError("hyper-network: unregistered layer " + std::string(side_name(r.side)) + std::to_string(r.layer));
  }
  const auto& p = policy(r.side);
  return {p.source ? r.source : -1, p.target ? r.target : -1, layout_.id(r)};
}

Var HyperNetwork::embed_keys(Tape& tape, std::span<const HyperKey> keys) const {
  std::vector<std::int64_t> s, t, l;
  for (const auto& [src, tgt, layer] : keys) {
    s.push_back(src);
    t.push_back(tgt);
    l.push_back(layer);
  }
  auto lang = tape.param(lang_emb_);
  std::vector<Var> parts{ops::gather_rows(lang, s), ops::gather_rows(lang, t),
                         ops::gather_rows(tape.param(layer_emb_), l)};
  return ops::concat(parts);
}

Var HyperNetwork::encode_context(Tape& tape, const Var& x, const ForwardContext& ctx) const {
  auto h = ops::matmul(x, tape.param(w_in_));
  if (cfg_.nonlinear_input) h = ops::relu(h);
  for (const auto& b : blocks_) {
    auto inner = ops::relu(ops::matmul(ops::layer_norm(h, tape.param(b.ln_gain), tape.param(b.ln_bias)),
                                       tape.param(b.w1)));
    if (ctx.dropout_active() && cfg_.dropout > 0.0) inner = ops::dropout(inner, cfg_.dropout, *ctx.rng);
    h = ops::add(ops::matmul(inner, tape.param(b.w2)), h);
  }
  return h;
}

GeneratedRows HyperNetwork::project(Tape& tape, const Var& h) const {
  const double s = cfg_.rescale ? inv_sqrt(cfg_.hidden) : 1.0;
  auto head = [&](const ParameterPtr& p) {
    auto out = ops::matmul(h, tape.param(p));
    return cfg_.rescale ? ops::scale(out, s) : out;
  };
  return {head(head_down_), head(head_up_), ops::add_scalar(head(head_gain_), 1.0), head(head_bias_)};
}

std::vector<AdapterVars> HyperNetwork::split(const GeneratedRows& rows) const {
  const auto dz = static_cast<std::size_t>(adapter_.d_model), db = static_cast<std::size_t>(adapter_.bottleneck);
  const std::size_t R = rows.down.shape()[0];
  std::vector<AdapterVars> out;
  out.reserve(R);
  for (std::size_t r = 0; r < R; ++r) {
    const std::int64_t idx[1] = {static_cast<std::int64_t>(r)};
    out.push_back({ops::reshape(ops::gather_rows(rows.down, idx), {dz, db}),
                   ops::reshape(ops::gather_rows(rows.up, idx), {db, dz}),
                   ops::reshape(ops::gather_rows(rows.gain, idx), {dz}),
                   ops::reshape(ops::gather_rows(rows.bias, idx), {dz})});
  }
  return out;
}

std::vector<AdapterVars> HyperNetwork::generate(Tape& tape, std::span<const Route> routes,
                                                const ForwardContext& ctx) const {
  std::vector<HyperKey> keys;
  std::map<HyperKey, std::size_t> slot;
  std::vector<std::size_t> route_slot;
  for (const auto& r : routes) {
    auto k = masked_key(r);
    auto [it, inserted] = slot.emplace(k, keys.size());
    if (inserted) keys.push_back(k);
    route_slot.push_back(it->second);
  }
  if (keys.empty()) return {};
  auto h = encode_context(tape, embed_keys(tape, keys), ctx);
  auto per_key = split(project(tape, h));
  std::vector<AdapterVars> out;
  out.reserve(routes.size());
  for (auto s : route_slot) out.push_back(per_key[s]);
  return out;
}

std::vector<std::optional<AdapterVars>> HyperNetwork::resolve(Tape& tape, std::span<const Route> routes,
                                                              const ForwardContext& ctx) {
  auto vars = generate(tape, routes, ctx);
  return {vars.begin(), vars.end()};
}

Tensor HyperNetwork::embed_route(const Route& r) const {
  Tape tape(false);
  const HyperKey k = masked_key(r);
  return embed_keys(tape, std::span(&k, 1)).value().reshaped({static_cast<std::size_t>(3 * cfg_.emb_dim)});
}

Tensor HyperNetwork::encode_context(const Tensor& x) const {
  Tape tape(false);
  auto row = x.rank() == 1 ? x.reshaped({1, x.size()}) : x;
  auto h = encode_context(tape, tape.constant(std::move(row)), ForwardContext{});
  return h.value().reshaped({static_cast<std::size_t>(cfg_.hidden)});
}

AdapterWeights HyperNetwork::to_weights(const GeneratedRows& rows) const {
  const auto dz = static_cast<std::size_t>(adapter_.d_model), db = static_cast<std::size_t>(adapter_.bottleneck);
  AdapterWeights w{rows.down.value().reshaped({dz, db}), rows.up.value().reshaped({db, dz}),
                   rows.gain.value().reshaped({dz}), rows.bias.value().reshaped({dz})};
  return w;
}

AdapterWeights HyperNetwork::generate_adapter(const Tensor& h) const {
  Tape tape(false);
  auto row = h.rank() == 1 ? h.reshaped({1, h.size()}) : h;
  return to_weights(project(tape, tape.constant(std::move(row))));
}

AdapterWeights HyperNetwork::generate(const Route& r) const {
  Tape tape(false);
  const HyperKey k = masked_key(r);
  auto h = encode_context(tape, embed_keys(tape, std::span(&k, 1)), ForwardContext{});
  return to_weights(project(tape, h));
}

AdapterWeights HyperNetwork::generate_unshifted(const Route& r) const {
  Tape tape(false);
  const HyperKey k = masked_key(r);
  auto h = encode_context(tape, embed_keys(tape, std::span(&k, 1)), ForwardContext{});
  auto gain = ops::matmul(h, tape.param(head_gain_));
  if (cfg_.rescale) gain = ops::scale(gain, inv_sqrt(cfg_.hidden));
  // Raw head product, so no shift has to be subtracted back out.
  auto rows = project(tape, h);
  rows.gain = gain;
  return to_weights(rows);
}

void HyperNetwork::hypernet_aware_init(Rng& rng) {
  const auto reference = reference_adapter_init(adapter_, rng);
  const auto generated = generate_unshifted(probe_route());
  const std::pair<const Tensor*, const Tensor*> pairs[] = {
      {&reference.down, &generated.down}, {&reference.up, &generated.up},
      {&reference.gain, &generated.gain}, {&reference.bias, &generated.bias}};
  const ParameterPtr heads[] = {head_down_, head_up_, head_gain_, head_bias_};
  for (int i = 0; i < 4; ++i) {
    const double sigma_a = stddev(pairs[i].first->data());
    const double sigma_h = stddev(pairs[i].second->data());
    if (!(sigma_h > 0.0)) {
      throw std::domain_error("hyper-network init: generated " + heads[i]->name() +
                              " output has zero SD on the probe route");
    }
    const double ratio = sigma_a / sigma_h;
    for (auto& v : heads[i]->value().data()) v *= ratio;
  }
}

std::map<HyperKey, AdapterWeights> HyperNetwork::cache_weights(std::span<const Route> routes) const {
  std::set<HyperKey> keys;
  for (const auto& r : routes) keys.insert(masked_key(r));
  // One key per forward pass, the same path as generate(route); batching rows
  // changes the GEMM summation order and would break bitwise equality.
  std::map<HyperKey, AdapterWeights> cache;
  for (const auto& k : keys) {
    Tape tape(false);
    auto h = encode_context(tape, embed_keys(tape, std::span(&k, 1)), ForwardContext{});
    cache.emplace(k, to_weights(project(tape, h)));
    ++generated_keys_;
  }
  return cache;
}

ParameterList HyperNetwork::parameters() const {
  ParameterList out{lang_emb_, layer_emb_, w_in_};
  for (const auto& b : blocks_) out.insert(out.end(), {b.ln_gain, b.ln_bias, b.w1, b.w2});
  out.insert(out.end(), {head_down_, head_up_, head_gain_, head_bias_});
  return out;
}

std::vector<std::optional<AdapterVars>> CachedAdapterProvider::resolve(Tape& tape, std::span<const Route> routes,
                                                                       const ForwardContext&) {
  std::vector<std::optional<AdapterVars>> out;
  std::map<HyperKey, AdapterVars> seen;
  for (const auto& r : routes) {
    const auto key = net_.masked_key(r);
    auto it = seen.find(key);
    if (it == seen.end()) {
      auto c = cache_.find(key);
      if (c == cache_.end()) throw RoutingError("route missing from adapter cache");
      it = seen.emplace(key, to_vars(tape, c->second)).first;
    }
    out.emplace_back(it->second);
  }
  return out;
}

void write_embeddings_csv(std::ostream& out, const Tensor& embeddings, const std::vector<std::string>& names) {
  if (embeddings.rows() != names.size()) throw ShapeError("embedding rows differ from language name count");
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << "\n" << std::setprecision(17);
  for (std::size_t d = 0; d < embeddings.cols(); ++d) {
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << embeddings.at(j, d);
    out << "\n";
  }
}

}  // namespace hyperadapters
