// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "sims/model_config.hpp"
#include "sims/oracle.hpp"
#include "sims/prompts.hpp"
#include "sims/simloop.hpp"
#include "sims/train.hpp"

namespace sims {

enum class Strategy : std::uint8_t { kOracle = 0, kRandom = 1, kBestOfN = 2 };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct EvalSpec {
  std::uint32_t samples = 4;  // paired draws per eval prompt
  std::uint64_t seed = 1;

  bool operator==(const EvalSpec&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainOptions pretrain;
  CorpusSpec corpus;
  std::uint64_t data_seed = 1;  // prompt partition and corpus
  LoopConfig loop;
  OracleSpec oracle;
  PromptSpec prompts = PromptSpec::defaults();
  EvalSpec eval;
  Strategy strategy = Strategy::kOracle;
  std::uint32_t best_of_n_candidates = 10;
  std::string output_dir = "runs";

  void validate() const;
};

ExperimentConfig parse_config(std::string_view ini_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Resolved config as INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& config);

// Applies one "section.key=value" override, as given on the command line.
void apply_override(ExperimentConfig& config, std::string_view assignment);

std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace sims
