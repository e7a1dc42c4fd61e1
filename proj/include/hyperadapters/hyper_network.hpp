#pragma once

#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "hyperadapters/adapter.hpp"

namespace hyperadapters {

/// Which language embeddings feed the hyper-network at one side's sites.
/// Excluded slots are replaced by exact zeros; the layer slot is always kept.
struct MaskPolicy {
  bool source = true;
  bool target = true;

  void validate() const;
  /// "s,t", "s" or "t".
  static MaskPolicy parse(const std::string& text);
  std::string str() const;
  bool operator==(const MaskPolicy&) const = default;
};

struct HyperConfig {
  int hidden = 102;
  int emb_dim = 50;
  int res_blocks = 2;
  bool nonlinear_input = true;
  /// Divide generated weights by sqrt(hidden).
  bool rescale = true;
  MaskPolicy enc_policy{true, true};
  MaskPolicy dec_policy{false, true};
  /// Dropout inside the residual blocks, training only.
  double dropout = 0.0;
  /// Apply the reference-SD head calibration after random init.
  bool aware_init = false;

  void validate() const;
};

/// (source or -1, target or -1, layer id) after masking.
using HyperKey = std::tuple<LangId, LangId, int>;

/// Generated weights for several routes, one row per route.
struct GeneratedRows {
  Var down;   // [R x d_model*bottleneck]
  Var up;     // [R x bottleneck*d_model]
  Var gain;   // [R x d_model], +1 already applied
  Var bias;   // [R x d_model]
};

/// One network generating every adapter from language and layer embeddings.
class HyperNetwork final : public AdapterProvider {
 public:
  HyperNetwork(HyperConfig cfg, AdapterConfig adapter, LayerLayout layout, int n_languages, Rng& rng);

  const HyperConfig& config() const { return cfg_; }
  const AdapterConfig& adapter_config() const { return adapter_; }
  const LayerLayout& layout() const { return layout_; }
  int n_languages() const { return n_languages_; }

  const MaskPolicy& policy(Side side) const { return side == Side::Encoder ? cfg_.enc_policy : cfg_.dec_policy; }
  HyperKey masked_key(const Route& r) const;

  // Tape-level stages, batched over rows.
  Var embed_keys(Tape& tape, std::span<const HyperKey> keys) const;
  Var encode_context(Tape& tape, const Var& x, const ForwardContext& ctx) const;
  GeneratedRows project(Tape& tape, const Var& h) const;
  std::vector<AdapterVars> split(const GeneratedRows& rows) const;
  std::vector<AdapterVars> generate(Tape& tape, std::span<const Route> routes, const ForwardContext& ctx) const;

  // Value-level conveniences (no dropout, no gradients).
  Tensor embed_route(const Route& r) const;
  Tensor encode_context(const Tensor& x) const;
  AdapterWeights generate_adapter(const Tensor& h) const;
  AdapterWeights generate(const Route& r) const;
  /// Generated weights before the +1 gain shift; used for SD calibration.
  AdapterWeights generate_unshifted(const Route& r) const;

  /// Rescales every head so that the probe route generates tensors with the
  /// SD of a reference adapter init. Throws std::domain_error if a generated
  /// tensor has zero SD.
  void hypernet_aware_init(Rng& rng);
  static Route probe_route() { return Route{0, 0, Side::Encoder, 0}; }

  /// One entry per distinct masked key among `routes`.
  std::map<HyperKey, AdapterWeights> cache_weights(std::span<const Route> routes) const;
  std::size_t generated_keys() const { return generated_keys_; }

  std::vector<std::optional<AdapterVars>> resolve(Tape& tape, std::span<const Route> routes,
                                                  const ForwardContext& ctx) override;
  ParameterList parameters() const override;

  const ParameterPtr& language_embeddings() const { return lang_emb_; }
  const ParameterPtr& layer_embeddings() const { return layer_emb_; }
  const ParameterPtr& input_projection() const { return w_in_; }
  const ParameterPtr& head_down() const { return head_down_; }
  const ParameterPtr& head_up() const { return head_up_; }
  const ParameterPtr& head_gain() const { return head_gain_; }
  const ParameterPtr& head_bias() const { return head_bias_; }

  struct ResBlock {
    ParameterPtr ln_gain, ln_bias, w1, w2;
  };
  const std::vector<ResBlock>& blocks() const { return blocks_; }

 private:
  AdapterWeights to_weights(const GeneratedRows& rows) const;

  HyperConfig cfg_;
  AdapterConfig adapter_;
  LayerLayout layout_;
  int n_languages_;
  ParameterPtr lang_emb_, layer_emb_, w_in_;
  std::vector<ResBlock> blocks_;
  ParameterPtr head_down_, head_up_, head_gain_, head_bias_;
  mutable std::size_t generated_keys_ = 0;
};

/// Serves adapters from a pre-generated route cache.
class CachedAdapterProvider final : public AdapterProvider {
 public:
  CachedAdapterProvider(const HyperNetwork& net, std::map<HyperKey, AdapterWeights> cache)
      : net_(net), cache_(std::move(cache)) {}
  std::vector<std::optional<AdapterVars>> resolve(Tape& tape, std::span<const Route> routes,
                                                  const ForwardContext& ctx) override;
  ParameterList parameters() const override { return {}; }

 private:
  const HyperNetwork& net_;
  std::map<HyperKey, AdapterWeights> cache_;
};

/// Language embeddings as CSV: a header row of language names, then one row
/// per embedding dimension, so column j holds language j.
void write_embeddings_csv(std::ostream& out, const Tensor& embeddings, const std::vector<std::string>& names);

}  // namespace hyperadapters
