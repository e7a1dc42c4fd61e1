#include "hyperadapters/routing.hpp"

#include <algorithm>

namespace hyperadapters {

AdapterVars AdapterParams::on(Tape& tape) const {
  return {tape.param(down), tape.param(up), tape.param(gain), tape.param(bias)};
}

AdapterWeights AdapterParams::weights() const {
  return {down->value(), up->value(), gain->value(), bias->value()};
}

RoutingScheme::RoutingScheme(RoutingKind kind, AdapterConfig cfg, LayerLayout layout)
    : kind_(kind), cfg_(cfg), layout_(layout) {
  cfg_.validate();
}

void RoutingScheme::add_block(const Key& key, const std::string& name, Rng& rng) {
  auto w = reference_adapter_init(cfg_, rng);
  blocks_.emplace(key, AdapterParams{std::make_shared<Parameter>(name + ".down", std::move(w.down)),
                                     std::make_shared<Parameter>(name + ".up", std::move(w.up)),
                                     std::make_shared<Parameter>(name + ".ln_gain", std::move(w.gain)),
                                     std::make_shared<Parameter>(name + ".ln_bias", std::move(w.bias))});
}

RoutingScheme RoutingScheme::languages(const AdapterConfig& cfg, LayerLayout layout, int n_languages, Rng& rng) {
  RoutingScheme s(RoutingKind::Language, cfg, layout);
  s.n_languages_ = n_languages;
  for (LangId lang = 0; lang < n_languages; ++lang) {
    for (int l = 0; l < layout.total(); ++l) {
      s.add_block({lang, -1, l}, "adapter.lang" + std::to_string(lang) + ".layer" + std::to_string(l), rng);
    }
  }
  return s;
}

RoutingScheme RoutingScheme::pairs(const AdapterConfig& cfg, LayerLayout layout, std::vector<LanguagePair> directions,
                                   Rng& rng) {
  RoutingScheme s(RoutingKind::LanguagePair, cfg, layout);
  std::sort(directions.begin(), directions.end());
  directions.erase(std::unique(directions.begin(), directions.end()), directions.end());
  for (const auto& p : directions) {
    s.n_languages_ = std::max({s.n_languages_, p.source + 1, p.target + 1});
    for (int l = 0; l < layout.total(); ++l) {
      s.add_block({p.source, p.target, l},
                  "adapter.pair" + std::to_string(p.source) + "-" + std::to_string(p.target) + ".layer" +
                      std::to_string(l),
                  rng);
    }
  }
  s.directions_ = std::move(directions);
  return s;
}

RoutingScheme::Key RoutingScheme::key_of(const Route& r) const {
  const int l = layout_.id(r);
  if (kind_ == RoutingKind::Language) return {r.side == Side::Encoder ? r.source : r.target, -1, l};
  return {r.source, r.target, l};
}

bool RoutingScheme::can_route(const Route& r) const { return blocks_.count(key_of(r)) > 0; }

const AdapterParams& RoutingScheme::route(const Route& r) const {
  auto it = blocks_.find(key_of(r));
  if (it == blocks_.end()) {
    const std::string what = kind_ == RoutingKind::Language
                                 ? "language " + std::to_string(std::get<0>(key_of(r)))
                                 : "pair " + std::to_string(r.source) + "->" + std::to_string(r.target);
    throw RoutingError("no adapter registered for " + what + " at " + side_name(r.side) + std::to_string(r.layer));
  }
  return it->second;
}

std::vector<std::optional<AdapterVars>> RoutingScheme::resolve(Tape& tape, std::span<const Route> routes,
                                                               const ForwardContext&) {
  std::vector<std::optional<AdapterVars>> out;
  out.reserve(routes.size());
  std::map<const AdapterParams*, AdapterVars> seen;
  for (const auto& r : routes) {
    const AdapterParams* p = &route(r);
    auto it = seen.find(p);
    if (it == seen.end()) it = seen.emplace(p, p->on(tape)).first;
    out.emplace_back(it->second);
  }
  return out;
}

ParameterList RoutingScheme::parameters() const {
  ParameterList out;
  for (const auto& [key, p] : blocks_) {
    out.insert(out.end(), {p.down, p.up, p.gain, p.bias});
  }
  return out;
}

std::vector<LanguagePair> pivot_centric_pairs(int n_languages, LangId pivot) {
  std::vector<LanguagePair> out;
  for (LangId l = 0; l < n_languages; ++l) {
    if (l == pivot) continue;
    out.push_back({l, pivot});
    out.push_back({pivot, l});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LanguagePair> all_directed_pairs(int n_languages) {
  std::vector<LanguagePair> out;
  for (LangId s = 0; s < n_languages; ++s)
    for (LangId t = 0; t < n_languages; ++t)
      if (s != t) out.push_back({s, t});
  return out;
}

}  // namespace hyperadapters
