#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace stseg {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of a named sub-stream. Streams are keyed by name only, so adding a new
/// stream never shifts the seeds of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char ch : stream) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ mix64(h));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index) {
  return mix64(derive_seed(master, stream) + mix64(index + 1));
}

inline Rng make_stream(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

inline Rng make_stream(std::uint64_t master, std::string_view stream, std::uint64_t index) {
  return Rng(derive_seed(master, stream, index));
}

/// Uniform double in [0,1) from the top 53 bits; unlike std::uniform_real_distribution
/// this is identical across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Box-Muller standard normal; portable for the same reason as uniform01.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform integer in [0, n).
inline int uniform_int(Rng& rng, int n) {
  const auto v = static_cast<int>(uniform01(rng) * n);
  return v < n ? v : n - 1;
}

}  // namespace stseg
