#pragma once

#include <cstdint>
#include <initializer_list>
#include <cmath>
#include <random>

namespace ctd {

using Rng = std::mt19937_64;

/// Mixes a base seed with a list of indices (splitmix64 chain). Used to give
/// every trajectory, cell, and draw its own stream so results do not depend
/// on iteration order or thread count.
std::uint64_t DeriveSeed(std::uint64_t seed,
                         std::initializer_list<std::uint64_t> keys);

inline Rng MakeRng(std::uint64_t seed,
                   std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(DeriveSeed(seed, keys));
}

double StandardNormal(Rng& rng);
double Uniform(Rng& rng, double lo, double hi);

}  // namespace ctd
