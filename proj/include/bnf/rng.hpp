#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bnf {

// mt19937_64 produces the same stream on every platform; the standard
// <random> distributions do not. All sampling goes through the helpers
// below so that seeded runs are bit-reproducible everywhere.

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the pair
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Uniform in [0, 1) with 53 bits of entropy.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Unbiased integer in [0, n). n must be > 0.
inline uint64_t below(std::mt19937_64& g, uint64_t n) {
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = g();
    if (r >= threshold) return r % n;
  }
}

// Box-Muller; stateless so call order alone determines the stream.
inline double normal(std::mt19937_64& g) {
  double u1 = uniform01(g);
  const double u2 = uniform01(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle_deterministic(std::vector<T>& v, std::mt19937_64& g) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[below(g, i)]);
  }
}

}  // namespace bnf
