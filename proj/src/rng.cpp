#include "hyperadapters/rng.hpp"

namespace hyperadapters {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t hash = basis;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  // splitmix64 finalizer over (seed, name hash)
  std::uint64_t z = seed ^ fnv1a(component) ^ 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor random_normal(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor random_uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace hyperadapters
