// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/simloop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sims/rng.hpp"

namespace sims {
namespace {

std::uint64_t prompt_key(std::uint32_t t, std::uint32_t n) {
  return (static_cast<std::uint64_t>(t) << 32) | n;
}

SamplingOptions sampling_for(const LoopConfig& c, std::uint32_t count, std::uint64_t seed) {
  SamplingOptions o;
  o.num_responses = count;
  o.max_new_tokens = c.max_new_tokens;
  o.temperature = c.temperature;
  o.seed = seed;
  return o;
}

void put_tokens(ByteWriter& w, const TokenSeq& seq) {
  w.put_u32(static_cast<std::uint32_t>(seq.size()));
  for (Token tok : seq) w.put_u32(static_cast<std::uint32_t>(tok));
}

TokenSeq get_tokens(ByteReader& r) {
  const std::uint32_t n = r.get_u32();
  if (n > r.remaining() / 4) throw Error(ErrorKind::kArtifactFormat, "token count exceeds payload");
  TokenSeq seq(n);
  for (auto& tok : seq) {
    tok = static_cast<Token>(r.get_u32());
    if (tok < 0 || tok >= vocab::kSize) throw Error(ErrorKind::kArtifactFormat, "token outside vocabulary");
  }
  return seq;
}

void put_doubles(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.put_f64(x);
}

std::vector<double> get_doubles(ByteReader& r, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = r.get_f64();
  return v;
}

// The SIMS labeling rule for one scored prompt. Returns false if skipped.
bool pick_pair(const ContrastEntry& e, SelectionMode mode, std::size_t& best, std::size_t& worst) {
  if (all_identical(e.responses)) return false;
  const auto ord = e.order();
  best = ord.front();
  worst = ord.back();
  if (mode == SelectionMode::kThreshold) return e.win[best] > 0.5 && e.win[worst] < 0.5;
  return true;
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::kSims: return "sims";
    case Variant::kSimsPr: return "sims-pr";
    case Variant::kSimsCs: return "sims-cs";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "sims") return Variant::kSims;
  if (name == "sims-pr" || name == "sims_pr") return Variant::kSimsPr;
  if (name == "sims-cs" || name == "sims_cs") return Variant::kSimsCs;
  throw Error(ErrorKind::kConfig, "unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(SelectionMode m) noexcept {
  return m == SelectionMode::kThreshold ? "threshold" : "best-worst";
}
std::string_view to_string(ContrastMode m) noexcept {
  return m == ContrastMode::kDifference ? "difference" : "sum";
}
std::string_view to_string(PolicyUpdate m) noexcept {
  return m == PolicyUpdate::kRetrain ? "retrain" : "cumulative";
}

SelectionMode parse_selection_mode(std::string_view name) {
  if (name == "threshold") return SelectionMode::kThreshold;
  if (name == "best-worst" || name == "best_worst") return SelectionMode::kBestWorst;
  throw Error(ErrorKind::kConfig, "unknown selection mode '" + std::string(name) + "'");
}
ContrastMode parse_contrast_mode(std::string_view name) {
  if (name == "difference") return ContrastMode::kDifference;
  if (name == "sum") return ContrastMode::kSum;
  throw Error(ErrorKind::kConfig, "unknown contrast mode '" + std::string(name) + "'");
}
PolicyUpdate parse_policy_update(std::string_view name) {
  if (name == "retrain") return PolicyUpdate::kRetrain;
  if (name == "cumulative") return PolicyUpdate::kCumulative;
  throw Error(ErrorKind::kConfig, "unknown policy update '" + std::string(name) + "'");
}

void LoopConfig::validate() const {
  if (iterations < 1) throw Error(ErrorKind::kConfig, "T must be >= 1");
  if (prompts_per_iter < 1) throw Error(ErrorKind::kConfig, "N must be >= 1");
  if (responses_per_prompt < 2) throw Error(ErrorKind::kConfig, "K must be >= 2");
  if (win_prob_samples < 1) throw Error(ErrorKind::kConfig, "M_samples must be >= 1");
  if (variant == Variant::kSimsCs && bank_capacity < prompts_per_iter) {
    throw Error(ErrorKind::kConfig, "bank capacity must be >= N for sims-cs");
  }
  if (!std::isfinite(strength)) throw Error(ErrorKind::kConfig, "strength must be finite");
  if (max_new_tokens < 1) throw Error(ErrorKind::kSamplingConfig, "max_new_tokens must be >= 1");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::kSamplingConfig, "temperature must be > 0");
  }
}

std::uint64_t loop_config_hash(const LoopConfig& c) {
  ByteWriter w;
  w.put_u32(c.iterations);
  w.put_u32(c.prompts_per_iter);
  w.put_u32(c.responses_per_prompt);
  w.put_u32(c.win_prob_samples);
  w.put_u8(static_cast<std::uint8_t>(c.learner));
  w.put_u8(static_cast<std::uint8_t>(c.variant));
  w.put_u32(c.bank_capacity);
  w.put_u64(c.master_seed);
  w.put_f32(c.strength);
  w.put_u8(static_cast<std::uint8_t>(c.selection));
  w.put_u8(static_cast<std::uint8_t>(c.contrast));
  w.put_u8(static_cast<std::uint8_t>(c.update));
  w.put_u8(static_cast<std::uint8_t>(c.aggregation));
  w.put_u8(c.capture_bare);
  w.put_u8(c.steer_skip);
  for (auto l : c.steer_layers) w.put_u32(l);
  w.put_u32(c.max_new_tokens);
  w.put_f32(c.temperature);
  const auto& b = w.bytes();
  return mix64(crc32(b) ^ (static_cast<std::uint64_t>(b.size()) << 32));
}

std::vector<TokenSeq> PromptPool::sample(std::uint64_t seed, std::uint32_t iteration,
                                         std::uint32_t count) const {
  if (prompts.size() < count) {
    throw Error(ErrorKind::kInsufficientData, "prompt pool holds " + std::to_string(prompts.size()) +
                                                  " prompts, iteration needs " + std::to_string(count));
  }
  // Partial Fisher-Yates over an index permutation.
  std::vector<std::size_t> idx(prompts.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {stream::kPrompts, iteration}));
  std::vector<TokenSeq> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    out.push_back(prompts[idx[i]]);
  }
  return out;
}

std::vector<std::size_t> ContrastEntry::order() const {
  std::vector<std::size_t> ord(responses.size());
  std::iota(ord.begin(), ord.end(), 0);
  std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
    if (win[a] != win[b]) return win[a] > win[b];
    return borda[a] > borda[b];
  });
  return ord;
}

double contrast_reward(std::span<const double> win, std::span<const double> loss, ContrastMode mode) {
  const double best = *std::max_element(win.begin(), win.end());
  const double worst = *std::max_element(loss.begin(), loss.end());
  return mode == ContrastMode::kDifference ? best - worst : best + worst - 1.0;
}

bool bank_append(MemoryBank& bank, ContrastEntry entry) {
  entry.sequence = bank.next_sequence++;
  const std::uint64_t seq = entry.sequence;
  bank.entries.push_back(std::move(entry));
  bool kept = true;
  while (bank.entries.size() > bank.capacity) {
    const auto victim = std::min_element(bank.entries.begin(), bank.entries.end(),
                                         [](const ContrastEntry& a, const ContrastEntry& b) {
                                           if (a.reward != b.reward) return a.reward < b.reward;
                                           return a.sequence < b.sequence;
                                         });
    if (victim->sequence == seq) kept = false;
    bank.entries.erase(victim);
  }
  return kept;
}

TopN bank_top_n(const MemoryBank& bank, std::size_t n) {
  TopN out;
  out.entries = bank.entries;
  std::sort(out.entries.begin(), out.entries.end(), [](const ContrastEntry& a, const ContrastEntry& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.sequence > b.sequence;
  });
  if (n > out.entries.size()) {
    out.truncated = true;
  } else {
    out.entries.resize(n);
  }
  return out;
}

Bytes save_bank(const MemoryBank& bank) {
  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kBankMagic.data()), kBankMagic.size()});
  w.put_u8(kBankFormatVersion);
  w.put_u64(bank.capacity);
  w.put_u64(bank.next_sequence);
  w.put_u32(static_cast<std::uint32_t>(bank.entries.size()));
  for (const auto& e : bank.entries) {
    w.put_u64(e.sequence);
    w.put_u32(e.iteration);
    w.put_f64(e.reward);
    put_tokens(w, e.prompt);
    w.put_u32(static_cast<std::uint32_t>(e.responses.size()));
    for (const auto& y : e.responses) put_tokens(w, y);
    put_doubles(w, e.win);
    put_doubles(w, e.loss);
    put_doubles(w, e.borda);
  }
  w.put_crc();
  return std::move(w).take();
}

MemoryBank load_bank(std::span<const std::uint8_t> data) {
  ByteReader r = open_artifact(data, kBankMagic, kBankFormatVersion);
  MemoryBank bank;
  bank.capacity = r.get_u64();
  bank.next_sequence = r.get_u64();
  const std::uint32_t count = r.get_u32();
  if (count > bank.capacity) throw Error(ErrorKind::kArtifactFormat, "bank holds more entries than its capacity");
  for (std::uint32_t i = 0; i < count; ++i) {
    ContrastEntry e;
    e.sequence = r.get_u64();
    e.iteration = r.get_u32();
    e.reward = r.get_f64();
    e.prompt = get_tokens(r);
    const std::uint32_t k = r.get_u32();
    if (k > r.remaining() / 4) throw Error(ErrorKind::kArtifactFormat, "response count exceeds payload");
    for (std::uint32_t j = 0; j < k; ++j) e.responses.push_back(get_tokens(r));
    e.win = get_doubles(r, k);
    e.loss = get_doubles(r, k);
    e.borda = get_doubles(r, k);
    bank.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::kArtifactFormat, "trailing bytes in bank artifact");
  return bank;
}

std::string IterationTrace::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["t"] = t;
  j["variant"] = variant;
  j["policy"] = policy_file;
  j["d_plus"] = d_plus;
  j["d_minus"] = d_minus;
  j["mean_oracle_score"] = mean_oracle_score;
  j["skipped_prompts"] = skipped_prompts;
  j["ranking_fallbacks"] = ranking_fallbacks;
  j["active_slots"] = active_slots;
  return j.dump();
}

ContrastEntry score_responses(const TinyTransformer& model, const PreferenceOracle& oracle,
                              const SteeringPolicy& policy, const LoopConfig& config, std::uint32_t t,
                              std::uint32_t prompt_index, const TokenSeq& prompt,
                              const std::vector<TokenSeq>& responses) {
  const std::uint64_t key = prompt_key(t, prompt_index);
  const auto samples = generate(
      model, policy, prompt,
      sampling_for(config, config.win_prob_samples,
                   derive_seed(config.master_seed, {stream::kWinProb, t, prompt_index})));
  const PolicyDuelStats stats = duel_against_samples(oracle, prompt, responses, samples, key);

  ContrastEntry e;
  e.prompt = prompt;
  e.responses = responses;
  e.win = stats.win;
  e.loss = stats.loss;
  e.iteration = t;
  const std::size_t k = responses.size();
  std::vector<double> scores(k);
  for (std::size_t i = 0; i < k; ++i) scores[i] = oracle.score(prompt, responses[i]);
  e.borda.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      e.borda[i] += oracle.preference_from_scores(
          scores[i], scores[j], {key, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
  e.reward = contrast_reward(e.win, e.loss, config.contrast);
  return e;
}

LoopResult run_loop(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                    const LoopConfig& config, const Selector& select, const LoopHooks& hooks,
                    std::string_view label) {
  config.validate();
  for (auto l : config.steer_layers) {
    if (l >= model.config.n_layers) throw Error(ErrorKind::kConfig, "steer layer out of range");
  }
  const auto learner = make_learner(config.learner, config.strength);
  const std::uint64_t hash = loop_config_hash(config);

  LoopResult result;
  SteeringPolicy current = SteeringPolicy::identity(model.config.n_layers, model.config.d_model);
  current.steer_skip = config.steer_skip;
  current.config_hash = hash;
  result.policies.push_back(current);

  const CaptureOptions capture{config.aggregation, config.capture_bare};

  for (std::uint32_t t = 1; t <= config.iterations; ++t) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<TokenSeq> prompts = source.sample(config.master_seed, t, config.prompts_per_iter);

    std::vector<std::vector<TokenSeq>> responses(prompts.size());
    double score_sum = 0.0;
    std::size_t score_count = 0;
    for (std::uint32_t n = 0; n < prompts.size(); ++n) {
      responses[n] = generate(model, current, prompts[n],
                              sampling_for(config, config.responses_per_prompt,
                                           derive_seed(config.master_seed, {stream::kGenerate, t, n})));
      for (const auto& y : responses[n]) {
        score_sum += oracle.score(prompts[n], y);
        ++score_count;
      }
    }

    const Selection sel = select(IterationInput{t, &prompts, &responses, &current});
    if (sel.candidates.empty()) throw Error(ErrorKind::kProtocol, "selector returned no labeling");
    if (sel.candidates.size() > 1 && !hooks.validate) {
      throw Error(ErrorKind::kConfig, "several candidate labelings need a validation hook");
    }

    std::size_t chosen = 0;
    std::vector<SteeringPolicy> built;
    std::vector<std::size_t> active(sel.candidates.size(), 0);
    for (std::size_t c = 0; c < sel.candidates.size(); ++c) {
      const PreferenceSets& sets = sel.candidates[c];
      if (sets.positive.empty()) {
        throw Error(ErrorKind::kEmptyPreferenceSet,
                    "iteration " + std::to_string(t) + ": every prompt was skipped, D+ is empty");
      }
      const auto [hp, hn] = split_pos_neg(sets.positive, sets.negative, model, current, capture);
      SteeringMap fns = learner->learn(hp, hn);
      if (!config.steer_layers.empty()) fns = restrict_layers(std::move(fns), config.steer_layers);
      for (const auto& [slot, f] : fns) active[c] += !f.is_identity();

      SteeringPolicy next = config.update == PolicyUpdate::kCumulative
                                ? refine_policy(current, fns, t)
                                : compose_policy(model.config, fns, t, learner->name(), hash, config.steer_skip);
      next.learner = learner->name();
      next.config_hash = hash;
      built.push_back(std::move(next));
    }
    if (built.size() > 1) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < built.size(); ++c) {
        const double v = hooks.validate(built[c]);
        if (v > best) best = v, chosen = c;
      }
    }
    current = std::move(built[chosen]);

    IterationTrace trace;
    trace.t = t;
    trace.variant = std::string(label);
    char name[32];
    std::snprintf(name, sizeof name, "policy_%04u.sf", t);
    trace.policy_file = name;
    trace.d_plus = sel.candidates[chosen].positive.size();
    trace.d_minus = sel.candidates[chosen].negative.size();
    trace.mean_oracle_score = score_count ? score_sum / static_cast<double>(score_count) : 0.0;
    trace.skipped_prompts = sel.candidates[chosen].skipped;
    trace.ranking_fallbacks = sel.ranking_fallbacks;
    trace.active_slots = active[chosen];
    trace.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

    result.policies.push_back(current);
    result.preference_sets.push_back(sel.candidates[chosen]);
    result.traces.push_back(trace);
    if (hooks.on_iteration) hooks.on_iteration(current, trace, nullptr);
  }
  return result;
}

LoopResult run_sims(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                    const LoopConfig& config, const LoopHooks& hooks) {
  const Selector select = [&](const IterationInput& in) {
    PreferenceSets sets;
    for (std::uint32_t n = 0; n < in.prompts->size(); ++n) {
      const ContrastEntry e = score_responses(model, oracle, *in.current, config, in.t, n, (*in.prompts)[n],
                                              (*in.responses)[n]);
      std::size_t best = 0, worst = 0;
      if (!pick_pair(e, config.selection, best, worst)) {
        ++sets.skipped;
        continue;
      }
      sets.positive.push_back({e.prompt, e.responses[best]});
      sets.negative.push_back({e.prompt, e.responses[worst]});
      sets.retained.push_back(n);
    }
    return Selection{{std::move(sets)}, 0};
  };
  return run_loop(model, oracle, source, config, select, hooks, to_string(Variant::kSims));
}

LoopResult run_sims_pr(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks) {
  const SteeringPolicy bare = SteeringPolicy::identity(model.config.n_layers, model.config.d_model);
  const Selector select = [&](const IterationInput& in) {
    RankStats stats;
    std::vector<std::vector<std::size_t>> rankings;
    rankings.reserve(in.prompts->size());
    for (std::size_t n = 0; n < in.prompts->size(); ++n) {
      rankings.push_back(rank_responses(oracle, model, bare, (*in.prompts)[n], (*in.responses)[n], &stats));
    }
    return Selection{{build_pref_sets(*in.prompts, *in.responses, rankings)}, stats.fallbacks};
  };
  return run_loop(model, oracle, source, config, select, hooks, to_string(Variant::kSimsPr));
}

LoopResult run_sims_cs(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks) {
  MemoryBank bank;
  bank.capacity = config.bank_capacity;
  std::vector<MemoryBank> states;
  const Selector select = [&](const IterationInput& in) {
    PreferenceSets sets;
    for (std::uint32_t n = 0; n < in.prompts->size(); ++n) {
      if (all_identical((*in.responses)[n])) {
        ++sets.skipped;
        continue;
      }
      bank_append(bank, score_responses(model, oracle, *in.current, config, in.t, n, (*in.prompts)[n],
                                        (*in.responses)[n]));
    }
    const TopN top = bank_top_n(bank, config.prompts_per_iter);
    for (std::size_t i = 0; i < top.entries.size(); ++i) {
      const ContrastEntry& e = top.entries[i];
      const auto ord = e.order();
      sets.positive.push_back({e.prompt, e.responses[ord.front()]});
      sets.negative.push_back({e.prompt, e.responses[ord.back()]});
      sets.retained.push_back(i);
    }
    states.push_back(bank);
    return Selection{{std::move(sets)}, 0};
  };
  LoopHooks wrapped = hooks;
  if (hooks.on_iteration) {
    wrapped.on_iteration = [&](const SteeringPolicy& p, const IterationTrace& tr, const MemoryBank*) {
      hooks.on_iteration(p, tr, &bank);
    };
  }
  LoopResult result = run_loop(model, oracle, source, config, select, wrapped, to_string(Variant::kSimsCs));
  result.bank_states = std::move(states);
  return result;
}

LoopResult run_variant(const TinyTransformer& model, const PreferenceOracle& oracle, const PromptPool& source,
                       const LoopConfig& config, const LoopHooks& hooks) {
  switch (config.variant) {
    case Variant::kSims: return run_sims(model, oracle, source, config, hooks);
    case Variant::kSimsPr: return run_sims_pr(model, oracle, source, config, hooks);
    case Variant::kSimsCs: return run_sims_cs(model, oracle, source, config, hooks);
  }
  throw Error(ErrorKind::kConfig, "unknown variant");
}

}  // namespace sims
