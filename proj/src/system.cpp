#include "hyperadapters/system.hpp"

#include <stdexcept>

namespace hyperadapters {

void SchemeConfig::validate() const {
  if (kind == SchemeKind::None) return;
  if (bottleneck <= 0) throw std::invalid_argument("adapter bottleneck must be positive");
  if (kind == SchemeKind::Hyper) hyper.validate();
}

AdaptedModel::AdaptedModel(ModelConfig model, SchemeConfig scheme, Vocabulary vocab, LangId pivot, std::uint64_t seed)
    : vocab_(vocab), pivot_(pivot), scheme_(std::move(scheme)) {
  if (model.vocab_size == 0) model.vocab_size = vocab.size();
  if (model.vocab_size != vocab.size()) {
    throw std::invalid_argument("model vocab_size " + std::to_string(model.vocab_size) + " does not match vocabulary " +
                                std::to_string(vocab.size()));
  }
  if (pivot < 0 || pivot >= vocab.n_languages) throw std::invalid_argument("pivot outside the language registry");
  scheme_.validate();
  auto model_rng = make_rng(seed, "init.model");
  model_ = std::make_unique<TranslationModel>(model, model_rng);

  auto rng = make_rng(seed, "init.adapters");
  const AdapterConfig acfg{model.d_model, scheme_.bottleneck};
  const auto layout = model.layout();
  switch (scheme_.kind) {
    case SchemeKind::None:
      break;
    case SchemeKind::Language:
      adapters_ = std::make_unique<RoutingScheme>(RoutingScheme::languages(acfg, layout, vocab.n_languages, rng));
      break;
    case SchemeKind::Pair: {
      auto dirs = scheme_.multi_parallel ? all_directed_pairs(vocab.n_languages)
                                         : pivot_centric_pairs(vocab.n_languages, pivot);
      adapters_ = std::make_unique<RoutingScheme>(RoutingScheme::pairs(acfg, layout, std::move(dirs), rng));
      break;
    }
    case SchemeKind::Hyper:
      adapters_ = std::make_unique<HyperNetwork>(scheme_.hyper, acfg, layout, vocab.n_languages, rng);
      break;
  }
}

ParameterList AdaptedModel::parameters() const {
  auto out = model_->parameters();
  if (adapters_) {
    auto extra = adapters_->parameters();
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

std::size_t AdaptedModel::adapter_parameter_count() const {
  return adapters_ ? total_size(adapters_->parameters()) : 0;
}

AdaptedModel::Score AdaptedModel::score(std::span<const Example> examples, double label_smoothing,
                                        AdapterProvider* adapters) const {
  if (examples.empty()) throw std::invalid_argument("score: no examples");
  constexpr std::size_t kChunk = 64;
  double loss_sum = 0.0;
  std::size_t correct = 0, tokens = 0;
  const ForwardContext eval{};
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    const auto part = examples.subspan(begin, std::min(kChunk, examples.size() - begin));
    const auto batch = make_batch(part, vocab_);
    Tape tape(false);
    auto memory = model_->encode(tape, batch, adapters, eval);
    auto logits = model_->decode(tape, batch, memory, batch.tgt_in, batch.tgt_len, batch.tgt_lengths, adapters, eval);
    const auto n = batch.target_tokens();
    loss_sum += ops::label_smoothed_cross_entropy(logits, batch.tgt_out, label_smoothing).value()[0] *
                static_cast<double>(n);
    const auto& v = logits.value();
    const std::size_t V = v.shape()[1];
    for (std::size_t r = 0; r < batch.tgt_out.size(); ++r) {
      if (batch.tgt_out[r] < 0) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < V; ++c)
        if (v[r * V + c] > v[r * V + best]) best = c;
      correct += static_cast<std::int64_t>(best) == batch.tgt_out[r];
    }
    tokens += n;
  }
  return {loss_sum / static_cast<double>(tokens), static_cast<double>(correct) / static_cast<double>(tokens), tokens};
}

}  // namespace hyperadapters
