// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sims/capture.hpp"
#include "sims/oracle.hpp"
#include "sims/steering.hpp"
#include "sims/tinylm.hpp"

namespace sims {

enum class Variant : std::uint8_t { kSims = 0, kSimsPr = 1, kSimsCs = 2 };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

// How the SIMS selector turns per-response win probabilities into a pair.
// kThreshold keeps a prompt only if its best response beats the current
// policy (win > 0.5) and its worst loses to it (win < 0.5); kBestWorst
// always takes the first and last of the ordering.
enum class SelectionMode : std::uint8_t { kThreshold = 0, kBestWorst = 1 };

// kDifference: r = max win - max loss. kSum: r = max win + max loss - 1,
// which rewards contrast on both ends instead of cancelling it.
enum class ContrastMode : std::uint8_t { kDifference = 0, kSum = 1 };

// kRetrain builds pi_t from the iteration-t functions alone; kCumulative
// folds them into pi_{t-1} (additive directions sum).
enum class PolicyUpdate : std::uint8_t { kRetrain = 0, kCumulative = 1 };

std::string_view to_string(SelectionMode m) noexcept;
std::string_view to_string(ContrastMode m) noexcept;
std::string_view to_string(PolicyUpdate m) noexcept;
SelectionMode parse_selection_mode(std::string_view name);
ContrastMode parse_contrast_mode(std::string_view name);
PolicyUpdate parse_policy_update(std::string_view name);

struct LoopConfig {
  std::uint32_t iterations = 3;  // T
  std::uint32_t prompts_per_iter = 64;  // N
  std::uint32_t responses_per_prompt = 4;  // K
  std::uint32_t win_prob_samples = 8;  // M
  LearnerKind learner = LearnerKind::kMeanDiff;
  Variant variant = Variant::kSims;
  std::uint32_t bank_capacity = 256;
  std::uint64_t master_seed = 0;

  float strength = 0.1f;  // alpha for additive functions
  SelectionMode selection = SelectionMode::kThreshold;
  ContrastMode contrast = ContrastMode::kDifference;
  PolicyUpdate update = PolicyUpdate::kCumulative;
  Aggregation aggregation = Aggregation::kMeanResponse;
  bool capture_bare = false;
  bool steer_skip = false;
  std::vector<std::uint32_t> steer_layers;  // empty: every layer

  std::uint32_t max_new_tokens = 24;
  float temperature = 1.0f;

  void validate() const;
  bool operator==(const LoopConfig&) const = default;
};

// Fixed pool of training prompts; iteration t draws N distinct prompts.
struct PromptPool {
  std::vector<TokenSeq> prompts;

  std::vector<TokenSeq> sample(std::uint64_t seed, std::uint32_t iteration, std::uint32_t count) const;
};

struct ContrastEntry {
  TokenSeq prompt;
  std::vector<TokenSeq> responses;
  std::vector<double> win;    // P(y_k beats the generating policy)
  std::vector<double> loss;   // P(generating policy beats y_k)
  std::vector<double> borda;  // summed pairwise preference among the K
  double reward = 0.0;
  std::uint32_t iteration = 0;
  std::uint64_t sequence = 0;  // insertion order, assigned by the bank

  // Best-first response order: win desc, borda desc, index asc.
  std::vector<std::size_t> order() const;

  bool operator==(const ContrastEntry&) const = default;
};

double contrast_reward(std::span<const double> win, std::span<const double> loss,
                       ContrastMode mode = ContrastMode::kDifference);

struct MemoryBank {
  std::size_t capacity = 0;
  std::uint64_t next_sequence = 0;
  std::vector<ContrastEntry> entries;

  bool operator==(const MemoryBank&) const = default;
};

// Inserts `entry`, then evicts the lowest-reward entry (oldest on ties)
// while over capacity. Returns false if the new entry itself was evicted.
bool bank_append(MemoryBank& bank, ContrastEntry entry);

struct TopN {
  std::vector<ContrastEntry> entries;
  bool truncated = false;  // N exceeded the bank size; every entry returned
};

// Highest reward first, newer first on ties.
TopN bank_top_n(const MemoryBank& bank, std::size_t n);

inline constexpr std::string_view kBankMagic = "SIMSBK01";
inline constexpr std::uint8_t kBankFormatVersion = 1;

Bytes save_bank(const MemoryBank& bank);
MemoryBank load_bank(std::span<const std::uint8_t> data);

struct IterationTrace {
  std::uint32_t t = 0;
  std::string variant;
  std::string policy_file;
  std::size_t d_plus = 0;
  std::size_t d_minus = 0;
  double mean_oracle_score = 0.0;  // over the N x K responses of pi_{t-1}
  std::size_t skipped_prompts = 0;
  std::uint32_t ranking_fallbacks = 0;
  std::size_t active_slots = 0;  // non-identity functions learned this iteration
  double wall_ms = 0.0;

  // JSON line without wall time, so traces compare byte for byte.
  std::string to_json() const;

  bool operator==(const IterationTrace&) const = default;
};

// What a selector hands back for one iteration. Several candidate labelings
// may be offered; the loop keeps the one its validator scores highest.
struct Selection {
  std::vector<PreferenceSets> candidates;
  std::uint32_t ranking_fallbacks = 0;
};

struct IterationInput {
  std::uint32_t t = 0;
  const std::vector<TokenSeq>* prompts = nullptr;
  const std::vector<std::vector<TokenSeq>>* responses = nullptr;
  const SteeringPolicy* current = nullptr;
};

using Selector = std::function<Selection(const IterationInput&)>;

struct LoopHooks {
  // Scores a candidate policy; required when a selector offers more than one
  // candidate labeling.
  std::function<double(const SteeringPolicy&)> validate;
  // Called after each iteration with the new policy and its trace.
  std::function<void(const SteeringPolicy&, const IterationTrace&, const MemoryBank*)> on_iteration;
};

struct LoopResult {
  std::vector<SteeringPolicy> policies;       // pi_0 .. pi_T
  std::vector<IterationTrace> traces;         // one per iteration, t = 1..T
  std::vector<PreferenceSets> preference_sets;
  std::vector<MemoryBank> bank_states;        // SIMS-CS only, after each iteration

  const SteeringPolicy& final_policy() const { return policies.back(); }
};

// Shared iteration engine: sample prompts, generate K responses under
// pi_{t-1}, select D+/D-, capture, learn, update.
LoopResult run_loop(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                    const LoopConfig& config, const Selector& select, const LoopHooks& hooks = {},
                    std::string_view label = "custom");

LoopResult run_sims(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                    const LoopConfig& config, const LoopHooks& hooks = {});
LoopResult run_sims_pr(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks = {});
LoopResult run_sims_cs(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks = {});

// Dispatches on config.variant.
LoopResult run_variant(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks = {});

// Scores the K responses of one prompt against M fresh draws from `policy`
// and returns a ready ContrastEntry (reward filled, sequence unset).
ContrastEntry score_responses(const TinyTransformer& model, const PreferenceOracle& oracle,
                              const SteeringPolicy& policy, const LoopConfig& config, std::uint32_t t,
                              std::uint32_t prompt_index, const TokenSeq& prompt,
                              const std::vector<TokenSeq>& responses);

std::uint64_t loop_config_hash(const LoopConfig& config);

}  // namespace sims
