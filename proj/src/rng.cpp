#include "ctd/rng.hpp"

namespace ctd {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed,
                         std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = SplitMix64(seed);
  for (std::uint64_t k : keys) h = SplitMix64(h ^ SplitMix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

double StandardNormal(Rng& rng) {
  // Box-Muller on two 53-bit uniforms; std::normal_distribution is
  // implementation-defined and would make files differ across toolchains
  constexpr double kTwoPi = 6.283185307179586476925;
  double u1;
  do {
    u1 = std::generate_canonical<double, 53>(rng);
  } while (u1 <= 0.0);
  const double u2 = std::generate_canonical<double, 53>(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

}  // namespace ctd
