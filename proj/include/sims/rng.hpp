// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace sims {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent child seed from a parent seed and a path of
// counters, e.g. derive_seed(master, {stream, iteration, prompt}). Every task
// that draws randomness gets its own seed this way so results never depend on
// evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::uint64_t p : path) {
    h = mix64(h + 0x9e3779b97f4a7c15ULL + mix64(p + 0x632be59bd9b4e019ULL));
  }
  return h;
}

// Small counter-based generator (SplitMix64 stream). The distributions are
// implemented here rather than taken from <random> so that sequences are
// identical across standard library implementations.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be positive.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the tiny bias is irrelevant at our ranges.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Standard normal via Box-Muller.
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

// Stream identifiers for derive_seed paths.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kPrompts = 3;
inline constexpr std::uint64_t kGenerate = 4;
inline constexpr std::uint64_t kWinProb = 5;
inline constexpr std::uint64_t kOracleNoise = 6;
inline constexpr std::uint64_t kLabels = 7;
inline constexpr std::uint64_t kEval = 8;
inline constexpr std::uint64_t kCorpus = 9;
inline constexpr std::uint64_t kValidation = 10;
}  // namespace stream

}  // namespace sims
