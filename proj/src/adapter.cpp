#include "hyperadapters/adapter.hpp"

#include <cmath>

namespace hyperadapters {

void AdapterConfig::validate() const {
  if (d_model < 1) throw std::invalid_argument("adapter d_model must be positive");
  if (bottleneck < 1) throw std::invalid_argument("adapter bottleneck must be >= 1");
}

void AdapterWeights::validate(const AdapterConfig& cfg) const {
  const auto dz = static_cast<std::size_t>(cfg.d_model), db = static_cast<std::size_t>(cfg.bottleneck);
  if (down.shape() != Shape{dz, db}) throw ShapeError("adapter down is " + shape_string(down.shape()));
  if (up.shape() != Shape{db, dz}) throw ShapeError("adapter up is " + shape_string(up.shape()));
  if (gain.shape() != Shape{dz}) throw ShapeError("adapter gain is " + shape_string(gain.shape()));
  if (bias.shape() != Shape{dz}) throw ShapeError("adapter bias is " + shape_string(bias.shape()));
  for (const Tensor* t : {&down, &up, &gain, &bias}) {
    if (!t->all_finite()) throw std::domain_error("adapter weights contain non-finite values");
  }
}

bool AdapterWeights::identical(const AdapterWeights& other) const {
  return down.identical(other.down) && up.identical(other.up) && gain.identical(other.gain) &&
         bias.identical(other.bias);
}

Var adapter_forward(const Var& z, const AdapterVars& w, double eps) {
  auto normed = ops::layer_norm(z, w.gain, w.bias, eps);
  auto hidden = ops::relu(ops::matmul(normed, w.down));
  return ops::add(ops::matmul(hidden, w.up), z);
}

Tensor adapter_forward(const Tensor& z, const AdapterWeights& w, double eps) {
  Tape tape(false);
  auto zin = z.rank() == 1 ? z.reshaped({1, z.size()}) : z;
  auto out = adapter_forward(tape.constant(std::move(zin)), to_vars(tape, w), eps);
  return out.value().reshaped(z.shape());
}

AdapterVars to_vars(Tape& tape, const AdapterWeights& w) {
  return {tape.constant(w.down), tape.constant(w.up), tape.constant(w.gain), tape.constant(w.bias)};
}

double down_init_sd(const AdapterConfig& cfg) { return 1.0 / std::sqrt(static_cast<double>(cfg.d_model)); }
double up_init_sd(const AdapterConfig& cfg) { return 1.0 / std::sqrt(static_cast<double>(cfg.bottleneck)); }

AdapterWeights reference_adapter_init(const AdapterConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto dz = static_cast<std::size_t>(cfg.d_model), db = static_cast<std::size_t>(cfg.bottleneck);
  AdapterWeights w;
  w.down = random_normal({dz, db}, down_init_sd(cfg), rng);
  w.up = random_normal({db, dz}, up_init_sd(cfg), rng);
  w.gain = Tensor({dz}, 1.0);
  w.bias = Tensor({dz}, 0.0);
  return w;
}

std::vector<std::optional<AdapterVars>> RouteRewriteProvider::resolve(Tape& tape, std::span<const Route> routes,
                                                                      const ForwardContext& ctx) {
  std::vector<Route> rewritten;
  rewritten.reserve(routes.size());
  for (const auto& r : routes) rewritten.push_back(rewrite_(r));
  return inner_.resolve(tape, rewritten, ctx);
}

}  // namespace hyperadapters
