// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "sims/model_config.hpp"

namespace sims {

enum class Aggregation : std::uint8_t { kMeanResponse = 0, kLastToken = 1 };

std::string_view to_string(Aggregation a) noexcept;

// Per-slot activation vectors, one per source (prompt, response) pair.
struct ActivationSet {
  std::map<SlotKey, std::vector<std::vector<float>>> slots;
  Aggregation aggregation = Aggregation::kMeanResponse;
  std::size_t source_count = 0;

  // Throws insufficient-data if the slot is missing.
  const std::vector<std::vector<float>>& at(SlotKey key) const;

  bool operator==(const ActivationSet&) const = default;
};

}  // namespace sims
