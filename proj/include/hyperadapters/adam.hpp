#pragma once

#include <cstdint>

#include "hyperadapters/tape.hpp"

namespace hyperadapters {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
};

/// Moment accumulators aligned index-for-index with a ParameterList.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  AdamState(const ParameterList& params, AdamOptions opts = {});
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws std::domain_error (leaving everything untouched) on a non-finite
/// gradient.
void adam_step(const ParameterList& params, AdamState& state, double lr);

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

}  // namespace hyperadapters
