#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace labmate::rng {

// The standard distributions are implementation-defined, so everything that
// feeds a reproducible artifact maps raw mt19937_64 output by hand.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

using Engine = std::mt19937_64;

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

/// Unbiased integer in [0, n) by rejection.
inline std::uint64_t below(Engine& g, std::uint64_t n) {
  const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
  std::uint64_t v = g();
  while (v >= limit) v = g();
  return v % n;
}

/// Box-Muller standard normal.
inline double normal(Engine& g) {
  double u1 = uniform01(g);
  while (u1 <= 0.0) u1 = uniform01(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <class It>
void shuffle(It first, It last, Engine& g) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = below(g, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace labmate::rng
