#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace perigen {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based seed derivation: the seed for a sweep cell depends only on
/// the master seed and the cell's coordinates, so any subset of a sweep can
/// be reproduced in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace perigen
