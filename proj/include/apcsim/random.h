#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace apcsim {

// All simulator randomness flows through mt19937_64, whose output sequence is
// fixed by the standard. The std:: distributions are implementation-defined,
// so the samplers below are spelled out to keep traces identical across
// standard libraries.
using Rng = std::mt19937_64;

// uniform in [0, 1) with 53 bits of resolution
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// uniform integer in [0, n), n > 0
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(rng()) * static_cast<unsigned __int128>(n);
  return static_cast<uint64_t>(wide >> 64);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline double exponential(Rng& rng, double mean) {
  return -mean * std::log1p(-uniform01(rng));
}

// Box-Muller, one variate per call
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) {
    u1 = uniform01(rng);
  }
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double lognormal(Rng& rng, double sigma) {
  if (sigma <= 0.0) {
    return 1.0;
  }
  return std::exp(sigma * standard_normal(rng));
}

}  // namespace apcsim
