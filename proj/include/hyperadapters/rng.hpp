#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hyperadapters/tensor.hpp"

namespace hyperadapters {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a; stable across platforms, used for config and cipher hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Derives an independent stream seed from a parent seed and a component name,
/// so adding a component never shifts the randomness of another.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

inline Rng make_rng(std::uint64_t seed, std::string_view component) { return Rng(derive_seed(seed, component)); }

Tensor random_normal(Shape shape, double sd, Rng& rng);
Tensor random_uniform(Shape shape, double bound, Rng& rng);

}  // namespace hyperadapters
