// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sims/activations.hpp"
#include "sims/binary_io.hpp"
#include "sims/model_config.hpp"

namespace sims {

enum class SteeringKind : std::uint8_t { kIdentity = 0, kAdditive = 1, kHouseholder = 2 };

std::string_view to_string(SteeringKind kind) noexcept;

// Norm below which a learned direction is treated as absent.
inline constexpr double kDegenerateNorm = 1e-8;

// One transform f: R^d -> R^d applied at a hook site.
//
//   identity     h
//   additive     h + strength * direction
//   householder  h - 2 (h.u - b) u   when h.u < b, else h
//
// The householder form is a conditional affine reflection across the
// hyperplane {z : z.u = b}: points on the negative side are mirrored onto the
// positive side, points already on the positive side pass through.
struct SteeringFunction {
  SteeringKind kind = SteeringKind::kIdentity;
  std::vector<float> direction;  // unit vector; `u` for householder
  float strength = 0.0f;         // additive only
  float bias = 0.0f;             // householder only

  static SteeringFunction identity() { return {}; }
  // Both factories validate that `direction` has unit norm (within 1e-6).
  static SteeringFunction additive(std::vector<float> direction, float strength);
  static SteeringFunction householder(std::vector<float> normal, float bias);

  bool is_identity() const noexcept { return kind == SteeringKind::kIdentity; }

  bool operator==(const SteeringFunction&) const = default;
};

// Applies f to h. Throws steering-shape on a dimension mismatch.
std::vector<float> apply(const SteeringFunction& f, std::span<const float> h);
void apply_inplace(const SteeringFunction& f, std::span<float> h);

// Unconditional affine Householder reflection across {z : z.u = b}. This is
// the involution underlying the householder steering function.
std::vector<float> reflect(std::span<const float> u, float b, std::span<const float> h);

// Signed distance of h to the hyperplane {z : z.u = b} (u unit).
double hyperplane_distance(std::span<const float> u, float b, std::span<const float> h);

using SteeringMap = std::map<SlotKey, SteeringFunction>;

// The steering functions (f_l, f'_l) for every block plus bookkeeping.
struct SteeringPolicy {
  struct LayerPair {
    SteeringFunction pre_attn;
    SteeringFunction pre_ffn;
    bool operator==(const LayerPair&) const = default;
  };

  std::vector<LayerPair> layers;
  std::uint32_t d_model = 0;
  std::uint32_t generation = 0;
  // When set, the steered vector also replaces the residual skip input
  // instead of feeding only the attention/FFN branch.
  bool steer_skip = false;
  std::string learner = "none";
  std::uint64_t config_hash = 0;

  static SteeringPolicy identity(std::uint32_t n_layers, std::uint32_t d_model);

  std::uint32_t num_layers() const noexcept { return static_cast<std::uint32_t>(layers.size()); }
  const SteeringFunction& at(SlotKey key) const;
  SteeringFunction& at(SlotKey key);
  bool is_identity() const noexcept;

  bool operator==(const SteeringPolicy&) const = default;
};

// Builds π_t from a slot map. Missing slots default to identity.
SteeringPolicy compose_policy(const ModelConfig& config, const SteeringMap& fns,
                              std::uint32_t generation, std::string learner = "none",
                              std::uint64_t config_hash = 0, bool steer_skip = false);

// Cumulative variant: additive slots are summed with the previous policy's
// additive slot; every other combination takes the new function.
SteeringPolicy refine_policy(const SteeringPolicy& previous, const SteeringMap& fns,
                             std::uint32_t generation);

// Keeps only slots whose layer is in `layers` (empty = keep all).
SteeringMap restrict_layers(SteeringMap fns, const std::vector<std::uint32_t>& layers);

// Mean-difference learner: direction = normalize(mean(H+) - mean(H-)),
// additive with the given strength. Degenerate slots become identity.
SteeringMap learn_mean_diff(const ActivationSet& positive, const ActivationSet& negative,
                            float strength);

// Householder learner: u = normalize(mean(H+) - mean(H-)), b = midpoint of the
// projected class means. Needs at least two samples per side per slot.
SteeringMap learn_householder(const ActivationSet& positive, const ActivationSet& negative);

enum class LearnerKind : std::uint8_t { kMeanDiff = 0, kHouseholder = 1 };

std::string_view to_string(LearnerKind kind) noexcept;
LearnerKind parse_learner_kind(std::string_view name);

// The learner interface the loops are written against.
class SteeringLearner {
 public:
  virtual ~SteeringLearner() = default;
  virtual std::string name() const = 0;
  virtual SteeringMap learn(const ActivationSet& positive,
                            const ActivationSet& negative) const = 0;
};

std::unique_ptr<SteeringLearner> make_learner(LearnerKind kind, float strength = 1.0f);

// SIMSSF01 artifact.
Bytes save_policy(const SteeringPolicy& policy);
SteeringPolicy load_policy(std::span<const std::uint8_t> data);

inline constexpr std::string_view kPolicyMagic = "SIMSSF01";
inline constexpr std::uint8_t kPolicyFormatVersion = 1;

}  // namespace sims
