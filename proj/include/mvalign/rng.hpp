#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace mvalign::rng {

// Counter-based randomness: every draw is a pure hash of (seed, stream ids).
// Results are independent of call order, which keeps scene generation
// reproducible no matter how the loops are arranged.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x853c49e6748fea9bull;
  for (std::uint64_t w : words) {
    h = splitmix64(h ^ splitmix64(w));
  }
  return h;
}

/// Uniform in the open interval (0, 1).
inline double u01(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t bits, double lo, double hi) {
  return lo + (hi - lo) * u01(bits);
}

/// Standard normal via Box-Muller from two independent hash draws.
inline double normal(std::uint64_t bits_a, std::uint64_t bits_b) {
  const double u1 = u01(bits_a);
  const double u2 = u01(bits_b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace mvalign::rng
