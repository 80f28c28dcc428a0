// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mxsim {

/// Mixes a 64-bit value (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a stream seed from an ordered key, e.g. (global_seed, tensor_id,
/// block_index). Equal keys give equal seeds on every platform.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto k : key) h = mix64(h ^ mix64(k));
  return h;
}

/// Seeded uniform stream used by stochastic rounding and data generation.
///
/// Uniforms are produced from the top 53 bits of mt19937_64 so the sequence
/// is identical across standard libraries (std::uniform_real_distribution is
/// not).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  /// +1 or -1 with equal probability.
  int rademacher() { return (engine_() >> 63) ? -1 : 1; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mxsim
