#include "hyperadapters/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyperadapters {

namespace {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

void consider(GradCheckResult& res, double analytic, double numeric, double floor, std::size_t input,
              std::size_t index) {
  const double err = relative_error(analytic, numeric, floor);
  if (res.coordinates++ == 0 || err > res.max_relative_error) {
    res.max_relative_error = err;
    res.worst_input = input;
    res.worst_index = index;
    res.analytic = analytic;
    res.numeric = numeric;
  }
}

double finite(double v) {
  if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor> inputs, GradCheckOptions opts) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return finite(f(tape, vars).value().item());
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  Var out = f(tape, vars);
  finite(out.value().item());
  tape.backward(out);
  std::vector<Tensor> analytic;
  for (const auto& v : vars) analytic.push_back(v.grad());

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + opts.eps;
      const double fp = evaluate(inputs);
      inputs[i][j] = x0 - opts.eps;
      const double fm = evaluate(inputs);
      inputs[i][j] = x0;
      consider(res, analytic[i][j], (fp - fm) / (2.0 * opts.eps), opts.floor, i, j);
    }
  }
  return res;
}

GradCheckResult grad_check_parameters(const std::function<Var(Tape&)>& loss, const ParameterList& params,
                                      GradCheckOptions opts, std::size_t max_coordinates_per_param) {
  auto evaluate = [&] {
    Tape tape(false);
    return finite(loss(tape).value().item());
  };

  zero_grads(params);
  {
    Tape tape;
    Var out = loss(tape);
    finite(out.value().item());
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p->grad());

  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value();
    const std::size_t n = w.size();
    const std::size_t stride =
        (max_coordinates_per_param == 0 || n <= max_coordinates_per_param) ? 1 : n / max_coordinates_per_param;
    for (std::size_t j = 0; j < n; j += stride) {
      const double x0 = w[j];
      w[j] = x0 + opts.eps;
      const double fp = evaluate();
      w[j] = x0 - opts.eps;
      const double fm = evaluate();
      w[j] = x0;
      consider(res, analytic[i][j], (fp - fm) / (2.0 * opts.eps), opts.floor, i, j);
    }
  }
  zero_grads(params);
  return res;
}

}  // namespace hyperadapters
