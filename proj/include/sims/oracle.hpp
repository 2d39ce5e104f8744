// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sims/capture.hpp"
#include "sims/error.hpp"
#include "sims/steering.hpp"
#include "sims/tinylm.hpp"

namespace sims {

enum class OracleKind : std::uint8_t { kScriptedAttribute = 0, kSelfRank = 1, kNoisyWrapper = 2 };

std::string_view to_string(OracleKind kind) noexcept;
OracleKind parse_oracle_kind(std::string_view name);

// score = target_frequency * (target count / length)
//       + distinct_ratio * (distinct tokens / length)
//       - repetition * (adjacent repeats / (length - 1))
struct AttributeWeights {
  double target_frequency = 1.0;
  double distinct_ratio = 0.0;
  double repetition = 0.0;

  bool operator==(const AttributeWeights&) const = default;
};

struct OracleSpec {
  OracleKind kind = OracleKind::kScriptedAttribute;
  Token target_token = '!';
  AttributeWeights weights;
  // Noisy wrapper: verdict flip probability, in [0, 0.5).
  double flip_probability = 0.0;
  std::uint64_t noise_seed = 0;
  // Self-rank: ranking prompt template and decoding budget.
  std::string ranking_template = "leaderboard";
  std::uint32_t rank_max_new_tokens = 16;
  bool allow_rank_fallback = true;

  void validate() const;
  bool operator==(const OracleSpec&) const = default;
};

// Identifies one duel for the noisy wrapper's per-duel coin. The coin depends
// on the unordered index pair, so judging (a, b) and (b, a) flips together.
struct DuelKey {
  std::uint64_t prompt = 0;
  std::uint32_t first = 0;
  std::uint32_t second = 1;
};

struct Judgment {
  std::size_t winner = 0;  // 0 = first response, 1 = second
  std::size_t loser = 1;
  double prob = 0.5;       // P(winner beats loser), >= 0.5
  std::string oracle_id;
};

// A preference judge o(y > y' | x). The scripted oracle compares attribute
// scores; self-rank compares mean log-likelihood under the backbone; the
// noisy wrapper flips the scripted verdict with probability epsilon.
class PreferenceOracle {
 public:
  explicit PreferenceOracle(OracleSpec spec, const TinyTransformer* backbone = nullptr);

  const OracleSpec& spec() const noexcept { return spec_; }
  const TinyTransformer* backbone() const noexcept { return backbone_; }
  std::string id() const;

  // Scalar quality of a response: attribute score for scripted and noisy
  // oracles, mean log-likelihood for self-rank.
  double score(const TokenSeq& prompt, const TokenSeq& response) const;

  // P(y beats y2 | x) in [0, 1]; P(y, y2) + P(y2, y) == 1 and P(y, y) == 0.5.
  double preference(const TokenSeq& prompt, const TokenSeq& y, const TokenSeq& y2,
                    const DuelKey& key = {}) const;

  // Same as preference() when the scores are already known.
  double preference_from_scores(double score_y, double score_y2, const DuelKey& key = {}) const;

 private:
  OracleSpec spec_;
  const TinyTransformer* backbone_;
};

// Scripted attribute score on its own (used by evaluation and tests).
double attribute_score(const TokenSeq& response, Token target, const AttributeWeights& w);

Judgment judge_pair(const PreferenceOracle& oracle, const TokenSeq& prompt, const TokenSeq& y,
                    const TokenSeq& y2, const DuelKey& key = {});

// Draws `count` responses for `prompt`; the policy-backed sampler below and
// test stubs both satisfy this shape.
template <typename S>
concept ResponseSampler = requires(const S& s, const TokenSeq& x, std::uint32_t n, std::uint64_t seed) {
  { s(x, n, seed) } -> std::convertible_to<std::vector<TokenSeq>>;
};

struct PolicySampler {
  const TinyTransformer* model;
  const SteeringPolicy* policy;
  SamplingOptions options;  // num_responses and seed are overridden per call

  std::vector<TokenSeq> operator()(const TokenSeq& prompt, std::uint32_t count,
                                   std::uint64_t seed) const {
    SamplingOptions o = options;
    o.num_responses = count;
    o.seed = seed;
    return generate(*model, *policy, prompt, o);
  }
};

// Win and loss probability of each candidate against a shared set of draws
// from the reference policy: win[k] = mean_m P(y_k > y'_m),
// loss[k] = mean_m P(y'_m > y_k).
struct PolicyDuelStats {
  std::vector<double> win;
  std::vector<double> loss;
};

PolicyDuelStats duel_against_samples(const PreferenceOracle& oracle, const TokenSeq& prompt,
                                     std::span<const TokenSeq> candidates,
                                     std::span<const TokenSeq> samples, std::uint64_t prompt_key = 0);

// Monte-Carlo estimate of P(y > pi | x) = E_{y' ~ pi(.|x)} P(y > y' | x).
template <ResponseSampler S>
double win_prob_vs_policy(const PreferenceOracle& oracle, const TokenSeq& y, const TokenSeq& prompt,
                          const S& sampler, std::uint32_t m_samples, std::uint64_t seed,
                          std::uint64_t prompt_key = 0) {
  if (m_samples < 1) throw Error(ErrorKind::kSamplingConfig, "M_samples must be >= 1");
  const std::vector<TokenSeq> draws = sampler(prompt, m_samples, seed);
  const TokenSeq* one = &y;
  return duel_against_samples(oracle, prompt, std::span<const TokenSeq>(one, 1), draws, prompt_key)
      .win.front();
}

struct RankStats {
  std::uint32_t fallbacks = 0;
};

// Orders the K responses best first (0-based indices). Scripted: score
// descending, ascending index on ties. Noisy: pairwise win count. Self-rank:
// renders the ranking prompt, decodes greedily from the backbone and parses
// the emitted order, falling back to likelihood ranking if that fails.
std::vector<std::size_t> rank_responses(const PreferenceOracle& oracle, const TinyTransformer& model,
                                        const SteeringPolicy& policy, const TokenSeq& prompt,
                                        std::span<const TokenSeq> responses, RankStats* stats = nullptr);

// Ranking-prompt template text for a template id ("leaderboard" is built
// in; any other id is read from <asset dir>/<id>.txt).
std::string ranking_template_text(std::string_view template_id);

// Substitutes {instruction}, numbered {response_N} placeholders, and repeats
// any line containing {response_k} once per response with {k} set to its
// 1-based number.
std::string render_ranking_prompt(std::string_view tmpl, std::string_view instruction,
                                  std::span<const std::string> responses);

// Parses an emitted ranking such as "[2, 3, 1]" (1-based) into 0-based
// indices; returns an empty vector unless the numbers form a permutation.
std::vector<std::size_t> parse_ranking(std::string_view text, std::size_t k);

struct PreferenceSets {
  std::vector<PromptResponse> positive;
  std::vector<PromptResponse> negative;
  std::vector<std::size_t> retained;  // prompt indices that contributed a pair
  std::size_t skipped = 0;            // prompts whose responses were all identical

  bool operator==(const PreferenceSets&) const = default;
};

bool all_identical(std::span<const TokenSeq> responses);

// Top-ranked response of each prompt goes to D+, bottom-ranked to D-.
PreferenceSets build_pref_sets(std::span<const TokenSeq> prompts,
                               std::span<const std::vector<TokenSeq>> responses,
                               std::span<const std::vector<std::size_t>> rankings);

}  // namespace sims
