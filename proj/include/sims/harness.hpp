// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sims/config.hpp"
#include "sims/oracle.hpp"
#include "sims/rng.hpp"
#include "sims/simloop.hpp"

namespace sims {

// Paired-seed duel of two samplers: for each prompt i and draw m both sides
// sample with derive_seed(seed, {eval, i, m}) and the oracle judges the pair.
// Returns the mean preference for side a.
template <ResponseSampler A, ResponseSampler B>
double eval_winrate_samplers(const PreferenceOracle& oracle, const A& a, const B& b,
                             std::span<const TokenSeq> prompts, std::uint32_t samples, std::uint64_t seed) {
  if (prompts.empty()) throw Error(ErrorKind::kInsufficientData, "empty eval prompt set");
  if (samples < 1) throw Error(ErrorKind::kSamplingConfig, "eval samples must be >= 1");
  double total = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (std::uint32_t m = 0; m < samples; ++m) {
      const std::uint64_t s = derive_seed(seed, {stream::kEval, i, m});
      const TokenSeq ya = a(prompts[i], 1, s).front();
      const TokenSeq yb = b(prompts[i], 1, s).front();
      total += oracle.preference(prompts[i], ya, yb, {static_cast<std::uint64_t>(i), 2 * m, 2 * m + 1});
    }
  }
  return total / static_cast<double>(prompts.size() * samples);
}

double eval_winrate(const TinyTransformer& model, const SteeringPolicy& a, const SteeringPolicy& b,
                    std::span<const TokenSeq> prompts, const PreferenceOracle& oracle, std::uint32_t samples,
                    std::uint64_t seed, const SamplingOptions& sampling = {});

// Mean oracle score of `samples` draws per prompt, seeded like eval_winrate.
double eval_mean_score(const TinyTransformer& model, const SteeringPolicy& policy,
                       std::span<const TokenSeq> prompts, const PreferenceOracle& oracle, std::uint32_t samples,
                       std::uint64_t seed, const SamplingOptions& sampling = {});

struct EvalReport {
  std::vector<double> win_rate;    // pi_t vs pi_0, t = 0..T
  std::vector<double> mean_score;  // t = 0..T
  std::uint64_t eval_seed = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t config_hash = 0;
  std::uint32_t samples = 0;
  std::size_t prompts = 0;

  std::string to_json() const;
};

EvalReport evaluate_policies(const TinyTransformer& model, std::span<const SteeringPolicy> policies,
                             std::span<const TokenSeq> prompts, const PreferenceOracle& oracle,
                             const EvalSpec& eval, const SamplingOptions& sampling);

// RANDOM labels each prompt with a uniformly drawn (positive, negative)
// response pair. BEST_OF_N draws `candidates` labelings per iteration
// (the first equals RANDOM's) and keeps the one whose policy has the best
// mean oracle score on `validation`.
LoopResult run_baseline_strategy(Strategy strategy, const TinyTransformer& model, const PreferenceOracle& oracle,
                                 const PromptPool& source, const LoopConfig& config,
                                 std::span<const TokenSeq> validation, std::uint32_t candidates,
                                 const EvalSpec& eval, const LoopHooks& hooks = {});

// Oracle strategy runs config.loop.variant; the others run the baselines.
LoopResult run_strategy(const ExperimentConfig& config, const TinyTransformer& model,
                        const PreferenceOracle& oracle, const PromptSets& prompts, const LoopHooks& hooks = {});

SamplingOptions loop_sampling(const LoopConfig& loop);

TinyTransformer build_pretrained_model(const ExperimentConfig& config, TrainReport* report = nullptr);

// SIMS_OUT_DIR if set, otherwise config.output_dir.
std::filesystem::path output_root(const ExperimentConfig& config);

// Joins a relative name under `root`; absolute paths and ".." escapes are
// rejected so nothing is written outside the output root.
std::filesystem::path contained_path(const std::filesystem::path& root, const std::filesystem::path& name);

struct RunSummary {
  std::filesystem::path dir;
  LoopResult result;
  EvalReport report;
};

// Runs one experiment and writes config.ini, policy_XXXX.sf, bank_XXXX.bin
// (sims-cs), trace.jsonl, timing.jsonl and eval.json into `dir`.
RunSummary run_experiment(const ExperimentConfig& config, const TinyTransformer& model,
                          const std::filesystem::path& dir);

std::string policy_file_name(std::uint32_t t);
std::string bank_file_name(std::uint32_t t);

}  // namespace sims
