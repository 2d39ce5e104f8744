// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sims/binary_io.hpp"

namespace sims {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(text.data());
  write_file(path, {p, text.size()});
}

}  // namespace

SamplingOptions loop_sampling(const LoopConfig& loop) {
  SamplingOptions s;
  s.max_new_tokens = loop.max_new_tokens;
  s.temperature = loop.temperature;
  return s;
}

double eval_winrate(const TinyTransformer& model, const SteeringPolicy& a, const SteeringPolicy& b,
                    std::span<const TokenSeq> prompts, const PreferenceOracle& oracle, std::uint32_t samples,
                    std::uint64_t seed, const SamplingOptions& sampling) {
  return eval_winrate_samplers(oracle, PolicySampler{&model, &a, sampling}, PolicySampler{&model, &b, sampling},
                               prompts, samples, seed);
}

double eval_mean_score(const TinyTransformer& model, const SteeringPolicy& policy,
                       std::span<const TokenSeq> prompts, const PreferenceOracle& oracle, std::uint32_t samples,
                       std::uint64_t seed, const SamplingOptions& sampling) {
  if (prompts.empty()) throw Error(ErrorKind::kInsufficientData, "empty eval prompt set");
  const PolicySampler sampler{&model, &policy, sampling};
  double total = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (std::uint32_t m = 0; m < samples; ++m) {
      const TokenSeq y = sampler(prompts[i], 1, derive_seed(seed, {stream::kEval, i, m})).front();
      total += oracle.score(prompts[i], y);
    }
  }
  return total / static_cast<double>(prompts.size() * samples);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["win_rate_vs_pi0"] = win_rate;
  j["mean_oracle_score"] = mean_score;
  j["eval_seed"] = eval_seed;
  j["master_seed"] = master_seed;
  j["config_hash"] = config_hash;
  j["samples"] = samples;
  j["prompts"] = prompts;
  return j.dump(2) + "\n";
}

EvalReport evaluate_policies(const TinyTransformer& model, std::span<const SteeringPolicy> policies,
                             std::span<const TokenSeq> prompts, const PreferenceOracle& oracle,
                             const EvalSpec& eval, const SamplingOptions& sampling) {
  if (policies.empty()) throw Error(ErrorKind::kInsufficientData, "no policies to evaluate");
  EvalReport r;
  r.eval_seed = eval.seed;
  r.samples = eval.samples;
  r.prompts = prompts.size();
  for (const auto& p : policies) {
    r.win_rate.push_back(eval_winrate(model, p, policies.front(), prompts, oracle, eval.samples, eval.seed, sampling));
    r.mean_score.push_back(eval_mean_score(model, p, prompts, oracle, eval.samples, eval.seed, sampling));
  }
  return r;
}

LoopResult run_baseline_strategy(Strategy strategy, const TinyTransformer& model, const PreferenceOracle& oracle,
                                 const PromptPool& source, const LoopConfig& config,
                                 std::span<const TokenSeq> validation, std::uint32_t candidates,
                                 const EvalSpec& eval, const LoopHooks& hooks) {
  if (strategy == Strategy::kOracle) throw Error(ErrorKind::kConfig, "oracle strategy is not a baseline");
  const std::uint32_t count = strategy == Strategy::kRandom ? 1 : candidates;
  if (count < 1) throw Error(ErrorKind::kConfig, "best-of-n needs at least one candidate");

  const Selector select = [&](const IterationInput& in) {
    Selection sel;
    for (std::uint32_t c = 0; c < count; ++c) {
      PreferenceSets sets;
      for (std::uint32_t n = 0; n < in.prompts->size(); ++n) {
        const auto& ys = (*in.responses)[n];
        if (all_identical(ys)) {
          ++sets.skipped;
          continue;
        }
        Rng rng(derive_seed(config.master_seed, {stream::kLabels, in.t, n, c}));
        const std::size_t k = ys.size();
        const std::size_t pos = rng.below(k);
        const std::size_t neg = (pos + 1 + rng.below(k - 1)) % k;
        sets.positive.push_back({(*in.prompts)[n], ys[pos]});
        sets.negative.push_back({(*in.prompts)[n], ys[neg]});
        sets.retained.push_back(n);
      }
      sel.candidates.push_back(std::move(sets));
    }
    return sel;
  };

  LoopHooks h = hooks;
  if (count > 1) {
    if (validation.empty()) throw Error(ErrorKind::kInsufficientData, "best-of-n needs validation prompts");
    const SamplingOptions sampling = loop_sampling(config);
    h.validate = [&, sampling](const SteeringPolicy& p) {
      return eval_mean_score(model, p, validation, oracle, eval.samples,
                             derive_seed(config.master_seed, {stream::kValidation}), sampling);
    };
  }
  return run_loop(model, oracle, source, config, select, h, to_string(strategy));
}

LoopResult run_strategy(const ExperimentConfig& config, const TinyTransformer& model,
                        const PreferenceOracle& oracle, const PromptSets& prompts, const LoopHooks& hooks) {
  if (config.strategy == Strategy::kOracle) return run_variant(model, oracle, prompts.train, config.loop, hooks);
  return run_baseline_strategy(config.strategy, model, oracle, prompts.train, config.loop, prompts.validation,
                               config.best_of_n_candidates, config.eval, hooks);
}

TinyTransformer build_pretrained_model(const ExperimentConfig& config, TrainReport* report) {
  const TinyTransformer base = init_model(config.model);
  const auto corpus = make_pretraining_corpus(config.prompts, config.corpus, config.data_seed);
  return pretrain_on_corpus(base, corpus, config.pretrain, report);
}

std::filesystem::path output_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("SIMS_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

std::filesystem::path contained_path(const std::filesystem::path& root, const std::filesystem::path& name) {
  if (name.empty() || name.is_absolute()) {
    throw Error(ErrorKind::kConfig, "output name '" + name.string() + "' must be a relative path");
  }
  for (const auto& part : name.lexically_normal()) {
    if (part == "..") throw Error(ErrorKind::kConfig, "output name '" + name.string() + "' escapes the output root");
  }
  return root / name.lexically_normal();
}

std::string policy_file_name(std::uint32_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "policy_%04u.sf", t);
  return buf;
}

std::string bank_file_name(std::uint32_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bank_%04u.bin", t);
  return buf;
}

RunSummary run_experiment(const ExperimentConfig& config, const TinyTransformer& model,
                          const std::filesystem::path& dir) {
  config.validate();
  if (model.config != config.model) {
    throw Error(ErrorKind::kConfig, "model checkpoint does not match the [model] section");
  }
  std::filesystem::create_directories(dir);
  write_text(dir / "config.ini", to_ini(config));

  const PreferenceOracle oracle(config.oracle, &model);
  const PromptSets prompts = make_prompt_source(config.prompts, config.data_seed);

  RunSummary out;
  out.dir = dir;
  out.result = run_strategy(config, model, oracle, prompts);

  for (std::size_t t = 0; t < out.result.policies.size(); ++t) {
    write_file(dir / policy_file_name(static_cast<std::uint32_t>(t)), save_policy(out.result.policies[t]));
  }
  for (std::size_t t = 0; t < out.result.bank_states.size(); ++t) {
    write_file(dir / bank_file_name(static_cast<std::uint32_t>(t + 1)), save_bank(out.result.bank_states[t]));
  }
  std::string trace, timing;
  for (const auto& tr : out.result.traces) {
    trace += tr.to_json() + "\n";
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["t"] = tr.t;
    j["wall_ms"] = tr.wall_ms;
    timing += j.dump() + "\n";
  }
  write_text(dir / "trace.jsonl", trace);
  write_text(dir / "timing.jsonl", timing);

  out.report = evaluate_policies(model, out.result.policies, prompts.eval, oracle, config.eval,
                                 loop_sampling(config.loop));
  out.report.master_seed = config.loop.master_seed;
  out.report.config_hash = config_hash(config);
  write_text(dir / "eval.json", out.report.to_json());
  return out;
}

}  // namespace sims
