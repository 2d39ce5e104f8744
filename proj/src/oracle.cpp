// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "sims/rng.hpp"

namespace sims {
namespace {

constexpr std::string_view kLeaderboardTemplate =
    "I want you to create a leaderboard of large-language model's responses. To do so, I will "
    "give you the instructions (prompts) given to the model, and the responses of model. To make "
    "a leaderboard, first make a list ranking which responses would be preferred by humans, then "
    "give the resulting list of JSON to `make leaderboard`.\n"
    "Here is the prompt:\n"
    "{{\n"
    "    \"instruction\": \"{instruction}\",\n"
    "}}\n"
    "Here is the responses from the model: [\n"
    "{{response {k}: {response_k} }},\n"
    "]\n";

double compare_scores(double a, double b) {
  if (a > b) return 1.0;
  if (a < b) return 0.0;
  return 0.5;
}

std::string prompt_text(const TokenSeq& prompt) {
  if (!prompt.empty() && prompt.front() == vocab::kBos) {
    return decode(TokenSeq(prompt.begin() + 1, prompt.end()));
  }
  return decode(prompt);
}

// Expands {name} placeholders; {{ and }} are literal braces.
std::string substitute(std::string_view line, const auto& lookup) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '{' && i + 1 < line.size() && line[i + 1] == '{') {
      out.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < line.size() && line[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else if (c == '{') {
      const std::size_t close = line.find('}', i);
      if (close == std::string_view::npos) {
        throw Error(ErrorKind::kConfig, "unterminated placeholder in ranking template");
      }
      out += lookup(line.substr(i + 1, close - i - 1));
      i = close;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::size_t> likelihood_ranking(const TinyTransformer& model, const SteeringPolicy& policy,
                                            const TokenSeq& prompt, std::span<const TokenSeq> responses) {
  std::vector<double> ll(responses.size());
  for (std::size_t k = 0; k < responses.size(); ++k) {
    ll[k] = mean_log_likelihood(model, policy, prompt, responses[k]);
  }
  std::vector<std::size_t> order(responses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ll[a] > ll[b]; });
  return order;
}

}  // namespace

std::string_view to_string(OracleKind kind) noexcept {
  switch (kind) {
    case OracleKind::kScriptedAttribute: return "scripted";
    case OracleKind::kSelfRank: return "self-rank";
    case OracleKind::kNoisyWrapper: return "noisy";
  }
  return "?";
}

OracleKind parse_oracle_kind(std::string_view name) {
  if (name == "scripted" || name == "scripted-attribute") return OracleKind::kScriptedAttribute;
  if (name == "self-rank" || name == "self_rank") return OracleKind::kSelfRank;
  if (name == "noisy" || name == "noisy-wrapper") return OracleKind::kNoisyWrapper;
  throw Error(ErrorKind::kConfig, "unknown oracle kind '" + std::string(name) + "'");
}

void OracleSpec::validate() const {
  if (target_token < 0 || target_token >= vocab::kSize) {
    throw Error(ErrorKind::kConfig, "target token outside vocabulary");
  }
  if (!(flip_probability >= 0.0 && flip_probability < 0.5)) {
    throw Error(ErrorKind::kConfig, "flip probability must lie in [0, 0.5)");
  }
  for (double w : {weights.target_frequency, weights.distinct_ratio, weights.repetition}) {
    if (!std::isfinite(w)) throw Error(ErrorKind::kConfig, "oracle weights must be finite");
  }
  if (kind == OracleKind::kSelfRank) {
    if (ranking_template.empty()) throw Error(ErrorKind::kConfig, "empty ranking template id");
    if (rank_max_new_tokens < 1) throw Error(ErrorKind::kConfig, "rank_max_new_tokens must be >= 1");
  }
}

double attribute_score(const TokenSeq& response, Token target, const AttributeWeights& w) {
  if (response.empty()) return 0.0;
  const double n = static_cast<double>(response.size());
  const auto hits = std::count(response.begin(), response.end(), target);
  const std::set<Token> distinct(response.begin(), response.end());
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < response.size(); ++i) repeats += response[i] == response[i - 1];
  const double repetition = response.size() > 1 ? static_cast<double>(repeats) / (n - 1.0) : 0.0;
  return w.target_frequency * (static_cast<double>(hits) / n) +
         w.distinct_ratio * (static_cast<double>(distinct.size()) / n) - w.repetition * repetition;
}

PreferenceOracle::PreferenceOracle(OracleSpec spec, const TinyTransformer* backbone)
    : spec_(std::move(spec)), backbone_(backbone) {
  spec_.validate();
  if (spec_.kind == OracleKind::kSelfRank && backbone_ == nullptr) {
    throw Error(ErrorKind::kConfig, "self-rank oracle needs a backbone model");
  }
}

std::string PreferenceOracle::id() const {
  std::ostringstream os;
  os << to_string(spec_.kind);
  if (spec_.kind != OracleKind::kSelfRank) os << ":target=" << spec_.target_token;
  if (spec_.kind == OracleKind::kNoisyWrapper) os << ":eps=" << spec_.flip_probability;
  return os.str();
}

double PreferenceOracle::score(const TokenSeq& prompt, const TokenSeq& response) const {
  if (spec_.kind == OracleKind::kSelfRank) {
    const SteeringPolicy bare =
        SteeringPolicy::identity(backbone_->config.n_layers, backbone_->config.d_model);
    return mean_log_likelihood(*backbone_, bare, prompt, response);
  }
  return attribute_score(response, spec_.target_token, spec_.weights);
}

double PreferenceOracle::preference_from_scores(double score_y, double score_y2,
                                                const DuelKey& key) const {
  const double p = compare_scores(score_y, score_y2);
  if (spec_.kind != OracleKind::kNoisyWrapper || spec_.flip_probability == 0.0) return p;
  const std::uint64_t lo = std::min(key.first, key.second);
  const std::uint64_t hi = std::max(key.first, key.second);
  Rng coin(derive_seed(spec_.noise_seed, {stream::kOracleNoise, key.prompt, lo, hi}));
  return coin.bernoulli(spec_.flip_probability) ? 1.0 - p : p;
}

double PreferenceOracle::preference(const TokenSeq& prompt, const TokenSeq& y, const TokenSeq& y2,
                                    const DuelKey& key) const {
  return preference_from_scores(score(prompt, y), score(prompt, y2), key);
}

Judgment judge_pair(const PreferenceOracle& oracle, const TokenSeq& prompt, const TokenSeq& y,
                    const TokenSeq& y2, const DuelKey& key) {
  const double p = oracle.preference(prompt, y, y2, key);
  Judgment j;
  j.oracle_id = oracle.id();
  if (p >= 0.5) {
    j.winner = 0, j.loser = 1, j.prob = p;
  } else {
    j.winner = 1, j.loser = 0, j.prob = 1.0 - p;
  }
  return j;
}

PolicyDuelStats duel_against_samples(const PreferenceOracle& oracle, const TokenSeq& prompt,
                                     std::span<const TokenSeq> candidates,
                                     std::span<const TokenSeq> samples, std::uint64_t prompt_key) {
  if (samples.empty()) throw Error(ErrorKind::kSamplingConfig, "no reference samples");
  std::vector<double> sample_scores(samples.size());
  for (std::size_t m = 0; m < samples.size(); ++m) sample_scores[m] = oracle.score(prompt, samples[m]);
  PolicyDuelStats out;
  out.win.resize(candidates.size());
  out.loss.resize(candidates.size());
  const auto k_count = static_cast<std::uint32_t>(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double s = oracle.score(prompt, candidates[k]);
    double win = 0.0, loss = 0.0;
    for (std::size_t m = 0; m < samples.size(); ++m) {
      // Candidates take indices [0, K), reference draws [K, K + M).
      const DuelKey key{prompt_key, static_cast<std::uint32_t>(k),
                        k_count + static_cast<std::uint32_t>(m)};
      const double p = oracle.preference_from_scores(s, sample_scores[m], key);
      win += p;
      loss += 1.0 - p;
    }
    out.win[k] = win / static_cast<double>(samples.size());
    out.loss[k] = loss / static_cast<double>(samples.size());
  }
  return out;
}

std::string ranking_template_text(std::string_view template_id) {
  if (template_id == "leaderboard") return std::string(kLeaderboardTemplate);
  const std::filesystem::path path =
      std::filesystem::path(SIMS_ASSET_DIR) / (std::string(template_id) + ".txt");
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "unknown ranking template '" + std::string(template_id) + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render_ranking_prompt(std::string_view tmpl, std::string_view instruction,
                                  std::span<const std::string> responses) {
  std::string out;
  std::size_t start = 0;
  while (start < tmpl.size()) {
    std::size_t end = tmpl.find('\n', start);
    const bool has_newline = end != std::string_view::npos;
    if (!has_newline) end = tmpl.size();
    const std::string_view line = tmpl.substr(start, end - start);
    const bool repeated = line.find("{response_k}") != std::string_view::npos ||
                          line.find("{k}") != std::string_view::npos;
    const std::size_t reps = repeated ? responses.size() : 1;
    for (std::size_t r = 0; r < reps; ++r) {
      out += substitute(line, [&](std::string_view name) -> std::string {
        if (name == "instruction") return std::string(instruction);
        if (repeated && name == "k") return std::to_string(r + 1);
        if (repeated && name == "response_k") return responses[r];
        if (name.starts_with("response_")) {
          std::size_t idx = 0;
          const std::string digits(name.substr(9));
          if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
            idx = std::stoul(digits);
            if (idx >= 1 && idx <= responses.size()) return responses[idx - 1];
            return std::string();
          }
        }
        throw Error(ErrorKind::kConfig, "unknown placeholder {" + std::string(name) + "} in ranking template");
      });
      if (has_newline) out.push_back('\n');
    }
    start = end + 1;
  }
  return out;
}

std::vector<std::size_t> parse_ranking(std::string_view text, std::size_t k) {
  static const std::regex kNumber(R"(\d+)");
  const std::string s(text);
  std::vector<std::size_t> out;
  std::vector<bool> seen(k, false);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
    const std::string digits = it->str();
    if (digits.size() > 6) return {};
    const std::size_t v = std::stoul(digits);
    if (v < 1 || v > k || seen[v - 1]) return {};
    seen[v - 1] = true;
    out.push_back(v - 1);
  }
  if (out.size() != k) return {};
  return out;
}

std::vector<std::size_t> rank_responses(const PreferenceOracle& oracle, const TinyTransformer& model,
                                        const SteeringPolicy& policy, const TokenSeq& prompt,
                                        std::span<const TokenSeq> responses, RankStats* stats) {
  const std::size_t k = responses.size();
  if (k < 2) throw Error(ErrorKind::kProtocol, "ranking needs at least two responses");
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);

  switch (oracle.spec().kind) {
    case OracleKind::kScriptedAttribute: {
      std::vector<double> s(k);
      for (std::size_t i = 0; i < k; ++i) s[i] = oracle.score(prompt, responses[i]);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
      return order;
    }
    case OracleKind::kNoisyWrapper: {
      std::vector<double> s(k), wins(k, 0.0);
      for (std::size_t i = 0; i < k; ++i) s[i] = oracle.score(prompt, responses[i]);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          if (i == j) continue;
          wins[i] += oracle.preference_from_scores(
              s[i], s[j], {0, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
        }
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wins[a] > wins[b]; });
      return order;
    }
    case OracleKind::kSelfRank:
      break;
  }

  std::vector<std::string> texts;
  texts.reserve(k);
  for (const auto& r : responses) texts.push_back(decode(r));
  const std::string rendered =
      render_ranking_prompt(ranking_template_text(oracle.spec().ranking_template), prompt_text(prompt), texts);

  // The toy context window cannot hold the full ranking prompt; keep BOS and
  // the tail, which carries the responses.
  const TokenSeq full = encode_prompt(rendered);
  const std::uint32_t budget = oracle.spec().rank_max_new_tokens;
  const std::size_t max_prompt = model.config.max_seq_len > budget + 2 ? model.config.max_seq_len - budget - 1 : 0;
  if (max_prompt < 2) throw Error(ErrorKind::kSequenceLength, "context too short for a ranking call");
  TokenSeq call{vocab::kBos};
  const std::size_t tail = std::min(full.size() - 1, max_prompt - 1);
  call.insert(call.end(), full.end() - static_cast<std::ptrdiff_t>(tail), full.end());

  SamplingOptions greedy;
  greedy.greedy = true;
  greedy.max_new_tokens = budget;
  const TokenSeq emitted = generate(model, policy, call, greedy).front();
  std::vector<std::size_t> parsed = parse_ranking(decode(emitted), k);
  if (!parsed.empty()) return parsed;

  if (!oracle.spec().allow_rank_fallback) {
    throw Error(ErrorKind::kRankingParse, "could not parse a ranking of " + std::to_string(k) +
                                              " responses from \"" + decode(emitted) + "\"");
  }
  if (stats) ++stats->fallbacks;
  return likelihood_ranking(model, policy, prompt, responses);
}

bool all_identical(std::span<const TokenSeq> responses) {
  return std::all_of(responses.begin(), responses.end(),
                     [&](const TokenSeq& r) { return r == responses.front(); });
}

PreferenceSets build_pref_sets(std::span<const TokenSeq> prompts,
                               std::span<const std::vector<TokenSeq>> responses,
                               std::span<const std::vector<std::size_t>> rankings) {
  if (responses.size() != prompts.size() || rankings.size() != prompts.size()) {
    throw Error(ErrorKind::kProtocol, "need exactly one response set and one ranking per prompt");
  }
  PreferenceSets out;
  for (std::size_t n = 0; n < prompts.size(); ++n) {
    const auto& ys = responses[n];
    const auto& rank = rankings[n];
    if (rank.size() != ys.size() || ys.size() < 2) {
      throw Error(ErrorKind::kProtocol, "ranking length " + std::to_string(rank.size()) +
                                            " does not match " + std::to_string(ys.size()) +
                                            " responses for prompt " + std::to_string(n));
    }
    std::vector<bool> seen(ys.size(), false);
    for (std::size_t idx : rank) {
      if (idx >= ys.size() || seen[idx]) throw Error(ErrorKind::kProtocol, "ranking is not a permutation");
      seen[idx] = true;
    }
    if (all_identical(ys)) {
      ++out.skipped;
      continue;
    }
    out.positive.push_back({prompts[n], ys[rank.front()]});
    out.negative.push_back({prompts[n], ys[rank.back()]});
    out.retained.push_back(n);
  }
  return out;
}

}  // namespace sims
