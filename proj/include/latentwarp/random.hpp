#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "latentwarp/grid.hpp"

namespace latentwarp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a key tuple; stable across platforms.
inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Uniform in [0, 1) from a hashed key. Counter-based, so seeded parameter
/// grids of any shape can be produced without mutable generator state.
inline double hash_uniform(std::initializer_list<std::uint64_t> parts) {
  return static_cast<double>(hash_key(parts) >> 11) * 0x1.0p-53;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Standard-normal grid drawn from a generator seeded with `seed`.
inline Grid normal_grid(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Grid g(shape);
  for (double& v : g.data()) v = normal(rng);
  return g;
}

}  // namespace latentwarp
