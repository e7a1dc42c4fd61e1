#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hyperadapters/ops.hpp"
#include "hyperadapters/types.hpp"

namespace hyperadapters {

struct AdapterConfig {
  int d_model = 64;
  int bottleneck = 16;
  void validate() const;
};

/// Concrete weights of one adapter block: down [d_model x bottleneck],
/// up [bottleneck x d_model], LayerNorm gain and bias [d_model].
struct AdapterWeights {
  Tensor down;
  Tensor up;
  Tensor gain;
  Tensor bias;

  void validate(const AdapterConfig& cfg) const;
  bool identical(const AdapterWeights& other) const;
};

/// The same four tensors as nodes on a tape.
struct AdapterVars {
  Var down;
  Var up;
  Var gain;
  Var bias;
};

/// Rows of z through up(relu(down(LN(z | gain, bias)))) + z.
Var adapter_forward(const Var& z, const AdapterVars& w, double eps = ops::kLayerNormEps);
Tensor adapter_forward(const Tensor& z, const AdapterWeights& w, double eps = ops::kLayerNormEps);

AdapterVars to_vars(Tape& tape, const AdapterWeights& w);

/// Regular adapter initialisation: fan-in scaled normal projections, unit gain,
/// zero bias. Also the reference init used to calibrate generated weights.
AdapterWeights reference_adapter_init(const AdapterConfig& cfg, Rng& rng);
double down_init_sd(const AdapterConfig& cfg);
double up_init_sd(const AdapterConfig& cfg);

/// Source of adapter weights for the translation model. nullopt at a route
/// means "no adapter" (identity).
class AdapterProvider {
 public:
  virtual ~AdapterProvider() = default;
  virtual std::vector<std::optional<AdapterVars>> resolve(Tape& tape, std::span<const Route> routes,
                                                          const ForwardContext& ctx) = 0;
  virtual ParameterList parameters() const = 0;
};

/// Identity at every site.
class IdentityAdapterProvider final : public AdapterProvider {
 public:
  std::vector<std::optional<AdapterVars>> resolve(Tape&, std::span<const Route> routes,
                                                  const ForwardContext&) override {
    return std::vector<std::optional<AdapterVars>>(routes.size());
  }
  ParameterList parameters() const override { return {}; }
};

/// Rewrites routes (e.g. swapping the source language) before delegating.
class RouteRewriteProvider final : public AdapterProvider {
 public:
  using Rewrite = std::function<Route(const Route&)>;
  RouteRewriteProvider(AdapterProvider& inner, Rewrite rewrite) : inner_(inner), rewrite_(std::move(rewrite)) {}

  std::vector<std::optional<AdapterVars>> resolve(Tape& tape, std::span<const Route> routes,
                                                  const ForwardContext& ctx) override;
  ParameterList parameters() const override { return inner_.parameters(); }

 private:
  AdapterProvider& inner_;
  Rewrite rewrite_;
};

}  // namespace hyperadapters
