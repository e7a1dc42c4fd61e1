#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hyperadapters/rng.hpp"
#include "hyperadapters/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first operand and throws ShapeError naming the offending shapes.
namespace hyperadapters::ops {

inline constexpr double kLayerNormEps = 1e-5;

Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a [cols] vector to every row of a matrix.
Var add_bias(const Var& x, const Var& bias);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var relu(const Var& a);

/// Concatenation along the last axis; all operands share the leading shape.
Var concat(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(const Var& a, Shape shape);

/// Row lookup (embedding gather). Index -1 yields a row of exact zeros.
Var gather_rows(const Var& table, std::span<const std::int64_t> indices);

/// Row-wise (x - mean) / sqrt(var + eps) * gain + bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps);

Var softmax(const Var& x);
Var log_softmax(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
/// Population variance over all elements.
Var variance(const Var& x);

/// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, double p, Rng& rng);

struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
  std::size_t heads = 1;
  bool causal = false;
  /// Valid key count per batch item; keys at or beyond it are masked.
  std::vector<std::size_t> key_lengths;
};

/// Scaled dot-product attention over packed [batch*len x d] rows, split
/// across `heads` column groups.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout);

/// Mean over non-ignored rows of cross-entropy against the smoothed target
/// (1 - alpha) * onehot + alpha / V. Targets of -1 are ignored.
Var label_smoothed_cross_entropy(const Var& logits, std::span<const std::int64_t> targets, double alpha);

}  // namespace hyperadapters::ops
