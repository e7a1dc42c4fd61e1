#include "hyperadapters/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace hyperadapters {

AdamState::AdamState(const ParameterList& params, AdamOptions opts) : options(opts) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.emplace_back(p->value().shape());
    second_moment.emplace_back(p->value().shape());
  }
}

void adam_step(const ParameterList& params, AdamState& state, double lr) {
  if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state was built for a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->grad().shape() != state.first_moment[i].shape()) {
      throw ShapeError("adam_step: moment shape " + shape_string(state.first_moment[i].shape()) +
                       " vs parameter " + params[i]->name() + " " + shape_string(params[i]->grad().shape()));
    }
    if (!params[i]->grad().all_finite()) {
      throw std::domain_error("adam_step: non-finite gradient in " + params[i]->name());
    }
  }
  const auto& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value().data();
    const auto g = params[i]->grad().data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p->grad().data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params)
      for (auto& g : p->grad().data()) g *= s;
  }
  return norm;
}

}  // namespace hyperadapters
