// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sims/activations.hpp"
#include "sims/steering.hpp"
#include "sims/tinylm.hpp"

namespace sims {

struct PromptResponse {
  TokenSeq prompt;
  TokenSeq response;

  bool operator==(const PromptResponse&) const = default;
};

struct CaptureOptions {
  Aggregation aggregation = Aggregation::kMeanResponse;
  // Capture through the bare model instead of the supplied policy.
  bool use_bare_model = false;
};

// Runs prompt ‖ marker ‖ response through the model (steered by `policy`
// unless use_bare_model is set) and reduces each hook site to one vector per
// pair over the response-token positions. An empty response falls back to
// the marker position.
ActivationSet collect_activations(const TinyTransformer& model, const SteeringPolicy& policy,
                                  std::span<const PromptResponse> pairs,
                                  const CaptureOptions& options = {});

// (H+, H-) for the positive and negative pair lists. Errors name the side.
std::pair<ActivationSet, ActivationSet> split_pos_neg(std::span<const PromptResponse> positive,
                                                      std::span<const PromptResponse> negative,
                                                      const TinyTransformer& model,
                                                      const SteeringPolicy& policy,
                                                      const CaptureOptions& options = {});

// Writes <stem>.f32 (little-endian float32 rows, one per pair and slot) and
// <stem>.jsonl (one index record per row: pair_index, layer, site,
// aggregation, row).
void dump_activations(const ActivationSet& set, const std::filesystem::path& dir,
                      std::string_view stem);

}  // namespace sims
