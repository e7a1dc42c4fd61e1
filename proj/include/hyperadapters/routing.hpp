#pragma once

#include <map>
#include <tuple>
#include <vector>

#include "hyperadapters/adapter.hpp"

namespace hyperadapters {

enum class RoutingKind { Language, LanguagePair };

/// Stored trainable weights of one regular adapter block.
struct AdapterParams {
  ParameterPtr down;
  ParameterPtr up;
  ParameterPtr gain;
  ParameterPtr bias;

  AdapterVars on(Tape& tape) const;
  AdapterWeights weights() const;
};

/// Regular adapters with a routing table. Language kind keys encoder sites
/// on the source language and decoder sites on the target; pair kind keys
/// every site on the (source, target) direction. Immutable after construction.
class RoutingScheme final : public AdapterProvider {
 public:
  /// Language kind: one adapter per language per layer for `n_languages`.
  static RoutingScheme languages(const AdapterConfig& cfg, LayerLayout layout, int n_languages, Rng& rng);
  /// Pair kind: one adapter per listed direction per layer.
  static RoutingScheme pairs(const AdapterConfig& cfg, LayerLayout layout, std::vector<LanguagePair> directions,
                             Rng& rng);

  RoutingKind kind() const { return kind_; }
  const AdapterConfig& config() const { return cfg_; }
  const LayerLayout& layout() const { return layout_; }
  const std::vector<LanguagePair>& directions() const { return directions_; }
  int n_languages() const { return n_languages_; }

  /// Throws RoutingError for an unregistered language or direction.
  const AdapterParams& route(const Route& r) const;
  bool can_route(const Route& r) const;

  std::vector<std::optional<AdapterVars>> resolve(Tape& tape, std::span<const Route> routes,
                                                  const ForwardContext& ctx) override;
  ParameterList parameters() const override;
  std::size_t block_count() const { return blocks_.size(); }

 private:
  // (key language or source, target or -1, layer id)
  using Key = std::tuple<LangId, LangId, int>;

  RoutingScheme(RoutingKind kind, AdapterConfig cfg, LayerLayout layout);
  Key key_of(const Route& r) const;
  void add_block(const Key& key, const std::string& name, Rng& rng);

  RoutingKind kind_;
  AdapterConfig cfg_;
  LayerLayout layout_;
  int n_languages_ = 0;
  std::vector<LanguagePair> directions_;
  std::map<Key, AdapterParams> blocks_;
};

/// Every direction between the pivot and the other languages, both ways.
std::vector<LanguagePair> pivot_centric_pairs(int n_languages, LangId pivot);
/// Every ordered pair of distinct languages.
std::vector<LanguagePair> all_directed_pairs(int n_languages);

}  // namespace hyperadapters
