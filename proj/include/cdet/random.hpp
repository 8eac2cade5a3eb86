#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdet {

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream seed for one (global seed, key, counter) triple. Workers that derive
/// their generator this way produce identical draws regardless of scheduling.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view key, uint64_t counter = 0) {
  return splitmix64(splitmix64(global_seed ^ fnv1a(key)) + counter);
}

/// Uniform real in [lo, hi].
inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Bernoulli draw that always consumes exactly one value from the stream.
inline bool chance(Rng& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace cdet
