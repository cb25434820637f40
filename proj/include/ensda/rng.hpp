/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_RNG_HPP
#define ENSDA_RNG_HPP

#include <cmath>
#include <cstdint>

namespace ensda {

/// splitmix64 finalizer; also used to derive stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream (splitmix64 over a keyed counter).
///
/// Streams derived from (seed, a, b, c) are independent of evaluation
/// order and thread count, which keeps parallel filter runs bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  /// Derive a stream for e.g. (seed, iteration, member).
  static Rng stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t k = mix64(seed + 0x9e3779b97f4a7c15ULL);
    k = mix64(k ^ (a + 0xd1b54a32d192ed03ULL));
    k = mix64(k ^ (b + 0x8cb92ba72f3d8dd7ULL));
    k = mix64(k ^ (c + 0xc2b2ae3d27d4eb4fULL));
    return Rng(k);
  }

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller (cosine branch).
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

}  // namespace ensda

#endif  // ENSDA_RNG_HPP
