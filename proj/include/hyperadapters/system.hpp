#pragma once

#include <cstdint>
#include <memory>

#include "hyperadapters/hyper_network.hpp"
#include "hyperadapters/param_count.hpp"
#include "hyperadapters/routing.hpp"
#include "hyperadapters/transformer.hpp"

namespace hyperadapters {

struct SchemeConfig {
  SchemeKind kind = SchemeKind::Hyper;
  int bottleneck = 16;
  /// Pair scheme only: one table per ordered language pair instead of the
  /// pivot-centric directions.
  bool multi_parallel = false;
  HyperConfig hyper;

  void validate() const;
};

/// Translation model plus the adapter scheme trained jointly with it.
class AdaptedModel {
 public:
  /// A zero vocab_size in `model` is filled in from the vocabulary. Model and
  /// adapters draw from independent streams derived from `seed`.
  AdaptedModel(ModelConfig model, SchemeConfig scheme, Vocabulary vocab, LangId pivot, std::uint64_t seed);

  const TranslationModel& model() const { return *model_; }
  const SchemeConfig& scheme() const { return scheme_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  LangId pivot() const { return pivot_; }

  /// Null for the dense scheme.
  AdapterProvider* adapters() const { return adapters_.get(); }
  HyperNetwork* hyper() const { return dynamic_cast<HyperNetwork*>(adapters_.get()); }
  RoutingScheme* routing() const { return dynamic_cast<RoutingScheme*>(adapters_.get()); }

  /// Model parameters followed by adapter parameters.
  ParameterList parameters() const;
  std::size_t adapter_parameter_count() const;

  /// Mean loss and token accuracy of teacher-forced predictions.
  struct Score {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t tokens = 0;
  };
  Score score(std::span<const Example> examples, double label_smoothing, AdapterProvider* adapters) const;
  Score score(std::span<const Example> examples, double label_smoothing) const {
    return score(examples, label_smoothing, adapters());
  }

 private:
  Vocabulary vocab_;
  LangId pivot_;
  SchemeConfig scheme_;
  std::unique_ptr<TranslationModel> model_;
  std::unique_ptr<AdapterProvider> adapters_;
};

}  // namespace hyperadapters
