// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <string_view>

#include "sims/tokenizer.hpp"

namespace sims {

// Hook sites inside one transformer block. Both sit on the raw residual
// stream: kPreAttn is the block input h_{l-1}, kPreFfn is the post-attention
// residual h'_l.
enum class Site : std::uint8_t { kPreAttn = 0, kPreFfn = 1 };

std::string_view to_string(Site site) noexcept;

struct SlotKey {
  std::uint32_t layer = 0;  // 0-based block index
  Site site = Site::kPreAttn;

  auto operator<=>(const SlotKey&) const = default;
};

struct ModelConfig {
  std::uint32_t n_layers = 4;
  std::uint32_t d_model = 64;
  std::uint32_t n_heads = 4;
  std::uint32_t d_ff = 128;
  std::uint32_t vocab_size = static_cast<std::uint32_t>(vocab::kSize);
  std::uint32_t max_seq_len = 64;
  std::uint64_t rng_seed = 1;

  // Throws a configuration error on any violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace sims
