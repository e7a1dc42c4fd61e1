#include "hyperadapters/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hyperadapters {

void ModelConfig::validate() const {
  if (n_enc_layers < 1 || n_dec_layers < 1) throw std::invalid_argument("model needs at least one layer per side");
  if (d_model < 1 || d_ff < 1) throw std::invalid_argument("model widths must be positive");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                std::to_string(n_heads));
  }
  if (vocab_size < 3) throw std::invalid_argument("vocab_size must cover pad, eos and one tag");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (auto len : tgt_lengths) n += len;
  return n;
}

Batch make_batch(std::span<const Example> examples, const Vocabulary& vocab, std::size_t extra_padding) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  Batch b;
  b.size = examples.size();
  for (const auto& e : examples) {
    b.src_len = std::max(b.src_len, e.source.size() + 2);
    b.tgt_len = std::max(b.tgt_len, e.target.size() + 1);
  }
  b.src_len += extra_padding;
  b.tgt_len += extra_padding;
  b.src.assign(b.size * b.src_len, Vocabulary::kPad);
  b.tgt_in.assign(b.size * b.tgt_len, Vocabulary::kPad);
  b.tgt_out.assign(b.size * b.tgt_len, -1);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& e = examples[i];
    const int tag = vocab.tag(e.pair.target);
    auto* src = b.src.data() + i * b.src_len;
    src[0] = tag;
    std::copy(e.source.begin(), e.source.end(), src + 1);
    src[e.source.size() + 1] = Vocabulary::kEos;
    b.src_lengths.push_back(e.source.size() + 2);

    auto* in = b.tgt_in.data() + i * b.tgt_len;
    auto* out = b.tgt_out.data() + i * b.tgt_len;
    in[0] = tag;
    std::copy(e.target.begin(), e.target.end(), in + 1);
    std::copy(e.target.begin(), e.target.end(), out);
    out[e.target.size()] = Vocabulary::kEos;
    b.tgt_lengths.push_back(e.target.size() + 1);
    b.pairs.push_back(e.pair);
  }
  return b;
}

Batch make_source_batch(std::span<const Example> examples, const Vocabulary& vocab) {
  std::vector<Example> stripped(examples.begin(), examples.end());
  for (auto& e : stripped) e.target.clear();
  return make_batch(stripped, vocab);
}

Tensor sinusoidal_positions(std::size_t len, std::size_t d_model) {
  Tensor pe({len, d_model}, 0.0);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      pe.at(pos, i) = i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

TranslationModel::TranslationModel(ModelConfig cfg, Rng& rng) : cfg_(cfg), tie_(cfg.tie_embeddings) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.d_model), ff = static_cast<std::size_t>(cfg_.d_ff);
  const auto V = static_cast<std::size_t>(cfg_.vocab_size);
  auto add = [this](std::string name, Tensor t) {
    params_.push_back(std::make_shared<Parameter>(std::move(name), std::move(t)));
    return params_.back();
  };
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    return std::pair{add(name + ".w", random_normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
                     add(name + ".b", Tensor({out}, 0.0))};
  };
  auto attention = [&](const std::string& name) {
    Attention a;
    std::tie(a.wq, a.bq) = linear(name + ".q", d, d);
    std::tie(a.wk, a.bk) = linear(name + ".k", d, d);
    std::tie(a.wv, a.bv) = linear(name + ".v", d, d);
    std::tie(a.wo, a.bo) = linear(name + ".o", d, d);
    return a;
  };
  auto norm = [&](const std::string& name) { return Norm{add(name + ".gain", Tensor({d}, 1.0)), add(name + ".bias", Tensor({d}, 0.0))}; };
  auto feed_forward = [&](const std::string& name) {
    FeedForward f;
    std::tie(f.w1, f.b1) = linear(name + ".fc1", d, ff);
    std::tie(f.w2, f.b2) = linear(name + ".fc2", ff, d);
    return f;
  };

  embedding_ = add("embed.tokens", random_normal({V, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  if (!tie_) output_ = add("output.proj", random_normal({V, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  for (int l = 0; l < cfg_.n_enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderLayer layer;
    layer.self = attention(p + ".self");
    layer.ln_self = norm(p + ".ln_self");
    layer.ff = feed_forward(p + ".ff");
    layer.ln_ff = norm(p + ".ln_ff");
    enc_.push_back(std::move(layer));
  }
  for (int l = 0; l < cfg_.n_dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    DecoderLayer layer;
    layer.self = attention(p + ".self");
    layer.ln_self = norm(p + ".ln_self");
    layer.cross = attention(p + ".cross");
    layer.ln_cross = norm(p + ".ln_cross");
    layer.ff = feed_forward(p + ".ff");
    layer.ln_ff = norm(p + ".ln_ff");
    dec_.push_back(std::move(layer));
  }
  if (cfg_.pre_norm) {
    enc_final_ = norm("enc.final_ln");
    dec_final_ = norm("dec.final_ln");
  }
}

ParameterList TranslationModel::parameters() const { return params_; }

void TranslationModel::check_ids(std::span<const std::int64_t> ids) const {
  for (auto id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(cfg_.vocab_size));
    }
  }
}

Var TranslationModel::drop(const Var& x, const ForwardContext& ctx) const {
  if (!ctx.dropout_active() || cfg_.dropout == 0.0) return x;
  return ops::dropout(x, cfg_.dropout, *ctx.rng);
}

Var TranslationModel::embed(Tape& tape, std::span<const std::int64_t> ids, std::size_t batch, std::size_t len,
                            const ForwardContext& ctx) const {
  check_ids(ids);
  auto tokens = ops::scale(ops::gather_rows(tape.param(embedding_), ids), std::sqrt(static_cast<double>(cfg_.d_model)));
  auto pe = sinusoidal_positions(len, static_cast<std::size_t>(cfg_.d_model));
  Tensor tiled({batch * len, static_cast<std::size_t>(cfg_.d_model)});
  for (std::size_t b = 0; b < batch; ++b) tiled.matrix().middleRows(b * len, len) = pe.matrix();
  return drop(ops::add(tokens, tape.constant(std::move(tiled))), ctx);
}

Var TranslationModel::norm(Tape& tape, const Norm& n, const Var& x) const {
  return ops::layer_norm(x, tape.param(n.gain), tape.param(n.bias));
}

template <typename F>
Var TranslationModel::sublayer(Tape& tape, const Norm& n, const Var& x, const ForwardContext& ctx, F&& body) const {
  if (cfg_.pre_norm) return ops::add(x, drop(body(norm(tape, n, x)), ctx));
  return norm(tape, n, ops::add(x, drop(body(x), ctx)));
}

Var TranslationModel::attend(Tape& tape, const Attention& a, const Var& queries, const Var& keys,
                             const ops::AttentionLayout& layout) const {
  auto proj = [&](const Var& x, const ParameterPtr& w, const ParameterPtr& b) {
    return ops::add_bias(ops::matmul(x, tape.param(w)), tape.param(b));
  };
  auto ctx = ops::attention(proj(queries, a.wq, a.bq), proj(keys, a.wk, a.bk), proj(keys, a.wv, a.bv), layout);
  return proj(ctx, a.wo, a.bo);
}

Var TranslationModel::feed_forward(Tape& tape, const FeedForward& f, const Var& x, const ForwardContext& ctx) const {
  auto h = ops::relu(ops::add_bias(ops::matmul(x, tape.param(f.w1)), tape.param(f.b1)));
  return ops::add_bias(ops::matmul(drop(h, ctx), tape.param(f.w2)), tape.param(f.b2));
}

Var TranslationModel::apply_adapters(Tape& tape, const Var& x, std::size_t len, std::span<const LanguagePair> pairs,
                                     Side side, int layer, AdapterProvider* adapters, const ForwardContext& ctx) const {
  if (adapters == nullptr) return x;
  std::vector<Route> routes;
  routes.reserve(pairs.size());
  for (const auto& p : pairs) routes.push_back({p.source, p.target, side, layer});
  const auto resolved = adapters->resolve(tape, routes, ctx);

  // Items sharing one adapter node form a group; identity items form their own.
  constexpr std::size_t kIdentity = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    const std::size_t key = resolved[i] ? resolved[i]->down.id() : kIdentity;
    auto [it, fresh] = members.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(i);
  }
  if (order.size() == 1) return order[0] == kIdentity ? x : adapter_forward(x, *resolved[0]);

  std::vector<Var> parts;
  std::vector<std::int64_t> restore(x.shape()[0]);
  std::int64_t row = 0;
  for (auto key : order) {
    const auto& items = members[key];
    std::vector<std::int64_t> rows;
    for (auto i : items)
      for (std::size_t p = 0; p < len; ++p) rows.push_back(static_cast<std::int64_t>(i * len + p));
    for (auto r : rows) restore[static_cast<std::size_t>(r)] = row++;
    auto part = ops::gather_rows(x, rows);
    parts.push_back(key == kIdentity ? part : adapter_forward(part, *resolved[items[0]]));
  }
  return ops::gather_rows(ops::concat_rows(parts), restore);
}

Var TranslationModel::encode(Tape& tape, const Batch& batch, AdapterProvider* adapters, const ForwardContext& ctx,
                             ForwardTrace* trace) const {
  const std::size_t B = batch.size, S = batch.src_len;
  ops::AttentionLayout layout{B, S, S, static_cast<std::size_t>(cfg_.n_heads), false, batch.src_lengths};
  auto x = embed(tape, batch.src, B, S, ctx);
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    const auto& layer = enc_[l];
    x = sublayer(tape, layer.ln_self, x, ctx, [&](const Var& h) { return attend(tape, layer.self, h, h, layout); });
    x = sublayer(tape, layer.ln_ff, x, ctx, [&](const Var& h) { return feed_forward(tape, layer.ff, h, ctx); });
    x = apply_adapters(tape, x, S, batch.pairs, Side::Encoder, static_cast<int>(l), adapters, ctx);
    if (trace) trace->encoder_sites.push_back(x);
  }
  if (cfg_.pre_norm) x = norm(tape, enc_final_, x);
  return x;
}

Var TranslationModel::decode(Tape& tape, const Batch& batch, const Var& memory, std::span<const std::int64_t> tgt_in,
                             std::size_t tgt_len, const std::vector<std::size_t>& tgt_lengths,
                             AdapterProvider* adapters, const ForwardContext& ctx, ForwardTrace* trace) const {
  const std::size_t B = batch.size, T = tgt_len;
  const auto H = static_cast<std::size_t>(cfg_.n_heads);
  ops::AttentionLayout self_layout{B, T, T, H, true, tgt_lengths};
  ops::AttentionLayout cross_layout{B, T, batch.src_len, H, false, batch.src_lengths};
  auto x = embed(tape, tgt_in, B, T, ctx);
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const auto& layer = dec_[l];
    x = sublayer(tape, layer.ln_self, x, ctx, [&](const Var& h) { return attend(tape, layer.self, h, h, self_layout); });
    if (cfg_.pre_norm) {
      x = ops::add(x, drop(attend(tape, layer.cross, norm(tape, layer.ln_cross, x), memory, cross_layout), ctx));
    } else {
      x = norm(tape, layer.ln_cross, ops::add(x, drop(attend(tape, layer.cross, x, memory, cross_layout), ctx)));
    }
    x = sublayer(tape, layer.ln_ff, x, ctx, [&](const Var& h) { return feed_forward(tape, layer.ff, h, ctx); });
    x = apply_adapters(tape, x, T, batch.pairs, Side::Decoder, static_cast<int>(l), adapters, ctx);
    if (trace) trace->decoder_sites.push_back(x);
  }
  if (cfg_.pre_norm) x = norm(tape, dec_final_, x);
  return ops::matmul_nt(x, tape.param(output_projection()));
}

Var TranslationModel::loss(Tape& tape, const Batch& batch, AdapterProvider* adapters, double label_smoothing,
                           const ForwardContext& ctx, ForwardTrace* trace) const {
  if (batch.size == 0) throw std::invalid_argument("empty batch");
  auto memory = encode(tape, batch, adapters, ctx, trace);
  auto logits = decode(tape, batch, memory, batch.tgt_in, batch.tgt_len, batch.tgt_lengths, adapters, ctx, trace);
  return ops::label_smoothed_cross_entropy(logits, batch.tgt_out, label_smoothing);
}

std::vector<std::vector<int>> TranslationModel::greedy_decode(const Batch& sources, AdapterProvider* adapters,
                                                              std::size_t max_len) const {
  const std::size_t B = sources.size;
  std::vector<std::vector<int>> out(B);
  if (max_len == 0 || B == 0) return out;
  Tape tape(false);
  const ForwardContext ctx{};
  auto memory = encode(tape, sources, adapters, ctx);
  std::vector<bool> done(B, false);
  for (std::size_t step = 1; step <= max_len; ++step) {
    // Rerun the decoder on the whole prefix; sequences are short.
    std::vector<std::int64_t> tgt_in(B * step, Vocabulary::kPad);
    for (std::size_t b = 0; b < B; ++b) {
      tgt_in[b * step] = sources.src[b * sources.src_len];
      for (std::size_t i = 0; i < out[b].size(); ++i) tgt_in[b * step + 1 + i] = out[b][i];
    }
    std::vector<std::size_t> lengths(B, step);
    auto logits = decode(tape, sources, memory, tgt_in, step, lengths, adapters, ctx);
    const auto L = logits.value().matrix();
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      Eigen::Index best = 0;
      L.row(static_cast<Eigen::Index>(b * step + step - 1)).maxCoeff(&best);
      if (best == Vocabulary::kEos) {
        done[b] = true;
        continue;
      }
      out[b].push_back(static_cast<int>(best));
      if (out[b].size() >= max_len) done[b] = true;
    }
    const bool all_done = std::all_of(done.begin(), done.end(), [](bool d) { return d; });
    if (all_done) break;
  }
  return out;
}

}  // namespace hyperadapters
