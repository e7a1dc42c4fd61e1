#pragma once

#include <cstdint>
#include <vector>

#include "hyperadapters/adapter.hpp"

namespace hyperadapters {

struct ModelConfig {
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 4;
  int vocab_size = 0;
  double dropout = 0.1;
  bool tie_embeddings = true;
  bool pre_norm = false;

  void validate() const;
  LayerLayout layout() const { return {n_enc_layers, n_dec_layers}; }
};

/// One parallel example in token ids, without tags or end markers.
struct Example {
  LanguagePair pair;
  std::vector<int> source;
  std::vector<int> target;
};

/// Padded, packed batch. Row b*len + i of a packed matrix is position i of
/// item b.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<std::int64_t> src;       // [tag(target), x..., eos], pad 0
  std::vector<std::size_t> src_lengths;
  std::vector<std::int64_t> tgt_in;    // [tag(target), y...], pad 0
  std::vector<std::int64_t> tgt_out;   // [y..., eos], pad -1
  std::vector<std::size_t> tgt_lengths;
  std::vector<LanguagePair> pairs;

  std::size_t target_tokens() const;
};

/// Tags, end markers and padding. `extra_padding` widens both sides, which
/// must leave the loss unchanged.
Batch make_batch(std::span<const Example> examples, const Vocabulary& vocab, std::size_t extra_padding = 0);

/// Sources only, for decoding.
Batch make_source_batch(std::span<const Example> examples, const Vocabulary& vocab);

/// Optional per-site outputs collected during a forward pass.
struct ForwardTrace {
  std::vector<Var> encoder_sites;
  std::vector<Var> decoder_sites;
};

/// Sinusoidal position table [len x d_model].
Tensor sinusoidal_positions(std::size_t len, std::size_t d_model);

/// Encoder-decoder transformer with one adapter site after every layer and
/// the token embedding shared by tags, symbols and (optionally) the output
/// projection.
class TranslationModel {
 public:
  TranslationModel(ModelConfig cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParameterList parameters() const;
  const ParameterPtr& embedding() const { return embedding_; }
  const ParameterPtr& output_projection() const { return tie_ ? embedding_ : output_; }

  /// [B*src_len x d_model]. A null provider applies no adapters.
  Var encode(Tape& tape, const Batch& batch, AdapterProvider* adapters, const ForwardContext& ctx,
             ForwardTrace* trace = nullptr) const;
  /// Logits [B*tgt_len x vocab] for teacher-forced decoder input.
  Var decode(Tape& tape, const Batch& batch, const Var& memory, std::span<const std::int64_t> tgt_in,
             std::size_t tgt_len, const std::vector<std::size_t>& tgt_lengths, AdapterProvider* adapters,
             const ForwardContext& ctx, ForwardTrace* trace = nullptr) const;
  /// Mean label-smoothed cross-entropy over non-pad target positions.
  Var loss(Tape& tape, const Batch& batch, AdapterProvider* adapters, double label_smoothing,
           const ForwardContext& ctx, ForwardTrace* trace = nullptr) const;

  /// Argmax decoding without dropout. Each output stops before the first
  /// end marker or at max_len tokens.
  std::vector<std::vector<int>> greedy_decode(const Batch& sources, AdapterProvider* adapters,
                                              std::size_t max_len) const;

 private:
  struct Attention {
    ParameterPtr wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Norm {
    ParameterPtr gain, bias;
  };
  struct FeedForward {
    ParameterPtr w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Attention self;
    Norm ln_self;
    FeedForward ff;
    Norm ln_ff;
  };
  struct DecoderLayer {
    Attention self;
    Norm ln_self;
    Attention cross;
    Norm ln_cross;
    FeedForward ff;
    Norm ln_ff;
  };

  Var embed(Tape& tape, std::span<const std::int64_t> ids, std::size_t batch, std::size_t len,
            const ForwardContext& ctx) const;
  Var attend(Tape& tape, const Attention& a, const Var& queries, const Var& keys, const ops::AttentionLayout& layout) const;
  Var feed_forward(Tape& tape, const FeedForward& f, const Var& x, const ForwardContext& ctx) const;
  Var norm(Tape& tape, const Norm& n, const Var& x) const;
  /// Residual sublayer in the configured norm placement.
  template <typename F>
  Var sublayer(Tape& tape, const Norm& n, const Var& x, const ForwardContext& ctx, F&& body) const;
  Var drop(const Var& x, const ForwardContext& ctx) const;
  Var apply_adapters(Tape& tape, const Var& x, std::size_t len, std::span<const LanguagePair> pairs, Side side,
                     int layer, AdapterProvider* adapters, const ForwardContext& ctx) const;
  void check_ids(std::span<const std::int64_t> ids) const;

  ModelConfig cfg_;
  bool tie_;
  ParameterPtr embedding_, output_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Norm enc_final_, dec_final_;  // pre-norm only
  ParameterList params_;
};

}  // namespace hyperadapters
