#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hyperadapters/tape.hpp"

namespace hyperadapters {

struct GradCheckOptions {
  double eps = 1e-4;
  /// Denominator floor for the relative error near zero gradients.
  double floor = 1e-8;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// f builds a scalar on the given tape from leaf variables holding `inputs`.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients against central differences at every
/// coordinate of every input. Throws std::domain_error on a non-finite probe.
GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor> inputs, GradCheckOptions opts = {});

/// Same comparison over the coordinates of trainable parameters, perturbing
/// them in place. `loss` must rebuild its graph from the current values.
/// When max_coordinates_per_param > 0 only that many evenly spaced entries of
/// each parameter are probed.
GradCheckResult grad_check_parameters(const std::function<Var(Tape&)>& loss, const ParameterList& params,
                                      GradCheckOptions opts = {}, std::size_t max_coordinates_per_param = 0);

}  // namespace hyperadapters
