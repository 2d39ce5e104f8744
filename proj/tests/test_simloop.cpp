// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "sims/prompts.hpp"
#include "sims/simloop.hpp"
#include "sims/train.hpp"
#include "test_util.hpp"

namespace sims {
namespace {

using testing::error_kind_of;

TEST(ContrastReward, HandComputed) {
  const std::vector<double> win = {0.9, 0.5, 0.2}, loss = {0.1, 0.5, 0.8};
  EXPECT_NEAR(contrast_reward(win, loss), 0.1, 1e-12);
  EXPECT_NEAR(contrast_reward(win, loss, ContrastMode::kSum), 0.7, 1e-12);
  const std::vector<double> half = {0.5, 0.5};
  EXPECT_EQ(contrast_reward(half, half), 0.0);
  EXPECT_EQ(contrast_reward(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}), 0.0);
}

ContrastEntry entry(double r, std::uint32_t t = 1) {
  ContrastEntry e;
  e.prompt = encode_prompt("p");
  e.responses = {encode("a"), encode("b")};
  e.win = {0.75, 0.25};
  e.loss = {0.25, 0.75};
  e.borda = {1.0, 0.0};
  e.reward = r;
  e.iteration = t;
  return e;
}

TEST(MemoryBank, TopNEvictionAndRecency) {
  MemoryBank bank;
  bank.capacity = 3;
  for (double r : {0.1, 0.7, 0.4}) bank_append(bank, entry(r));
  TopN top = bank_top_n(bank, 2);
  ASSERT_EQ(top.entries.size(), 2u);
  EXPECT_EQ(top.entries[0].reward, 0.7);
  EXPECT_EQ(top.entries[1].reward, 0.4);
  EXPECT_FALSE(top.truncated);

  EXPECT_TRUE(bank_append(bank, entry(0.5)));
  EXPECT_EQ(bank.entries.size(), 3u);
  for (const auto& e : bank.entries) EXPECT_NE(e.reward, 0.1);
  EXPECT_FALSE(bank_append(bank, entry(0.0)));

  MemoryBank ties;
  ties.capacity = 4;
  bank_append(ties, entry(0.5, 1));
  bank_append(ties, entry(0.5, 2));
  EXPECT_EQ(bank_top_n(ties, 1).entries[0].iteration, 2u);
  top = bank_top_n(ties, 9);
  EXPECT_TRUE(top.truncated);
  EXPECT_EQ(top.entries.size(), 2u);
}

TEST(MemoryBank, DominanceUnderRandomOperations) {
  Rng rng(12);
  MemoryBank bank;
  bank.capacity = 17;
  for (int op = 0; op < 5000; ++op) {
    bank_append(bank, entry(std::round(rng.uniform() * 20.0) / 20.0, static_cast<std::uint32_t>(op)));
    ASSERT_LE(bank.entries.size(), bank.capacity);
    const std::size_t n = 1 + rng.below(bank.entries.size());
    const TopN top = bank_top_n(bank, n);
    double min_in = 1e9, max_out = -1e9;
    std::set<std::uint64_t> chosen;
    for (const auto& e : top.entries) min_in = std::min(min_in, e.reward), chosen.insert(e.sequence);
    for (const auto& e : bank.entries) {
      if (!chosen.count(e.sequence)) max_out = std::max(max_out, e.reward);
    }
    ASSERT_GE(min_in, max_out);
  }
}

TEST(MemoryBank, ArtifactRoundTrip) {
  MemoryBank bank;
  bank.capacity = 5;
  for (double r : {0.3, -0.2, 0.9}) bank_append(bank, entry(r));
  const Bytes data = save_bank(bank);
  EXPECT_EQ(load_bank(data), bank);
  Bytes bad = data;
  bad[data.size() / 2] ^= 0x10;
  EXPECT_EQ(error_kind_of([&] { load_bank(bad); }), ErrorKind::kArtifactFormat);
  Bytes v2 = data;
  v2[8] = 2;
  EXPECT_EQ(error_kind_of([&] { load_bank(v2); }), ErrorKind::kUnsupportedVersion);
}

TEST(ContrastEntry, OrderUsesWinThenBordaThenIndex) {
  ContrastEntry e = entry(0.0);
  e.responses = {encode("a"), encode("b"), encode("c"), encode("d")};
  e.win = {0.5, 0.7, 0.5, 0.5};
  e.borda = {1.0, 0.0, 2.0, 1.0};
  EXPECT_EQ(e.order(), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(LoopConfig, Validation) {
  LoopConfig c;
  c.iterations = 0;
  EXPECT_EQ(error_kind_of([&] { c.validate(); }), ErrorKind::kConfig);
  c = LoopConfig{};
  c.responses_per_prompt = 1;
  EXPECT_EQ(error_kind_of([&] { c.validate(); }), ErrorKind::kConfig);
  c = LoopConfig{};
  c.variant = Variant::kSimsCs;
  c.bank_capacity = c.prompts_per_iter - 1;
  EXPECT_EQ(error_kind_of([&] { c.validate(); }), ErrorKind::kConfig);
  c = LoopConfig{};
  c.temperature = -1.0f;
  EXPECT_EQ(error_kind_of([&] { c.validate(); }), ErrorKind::kSamplingConfig);
}

TEST(PromptPool, DistinctDeterministicDraws) {
  PromptPool pool;
  for (int i = 0; i < 30; ++i) pool.prompts.push_back(encode_prompt("p" + std::to_string(i)));
  const auto a = pool.sample(5, 1, 10);
  EXPECT_EQ(a, pool.sample(5, 1, 10));
  EXPECT_NE(a, pool.sample(5, 2, 10));
  EXPECT_EQ(std::set<TokenSeq>(a.begin(), a.end()).size(), 10u);
  EXPECT_EQ(error_kind_of([&] { pool.sample(5, 1, 31); }), ErrorKind::kInsufficientData);
}

// A small model pretrained briefly on the synthetic corpus, shared by the
// loop tests below.
class LoopTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.n_heads = 4;
    c.d_ff = 64;
    c.max_seq_len = 64;
    c.rng_seed = 3;
    CorpusSpec spec;
    spec.count = 600;
    TrainOptions o;
    o.steps = 150;
    model_ = new TinyTransformer(
        pretrain_on_corpus(init_model(c), make_pretraining_corpus(PromptSpec::defaults(), spec, 2), o));
    PromptSpec ps = PromptSpec::defaults();
    ps.train_count = 64;
    ps.eval_count = 8;
    pool_ = new PromptPool(make_prompt_source(ps, 4).train);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete pool_;
  }

  static LoopConfig config() {
    LoopConfig c;
    c.iterations = 2;
    c.prompts_per_iter = 8;
    c.responses_per_prompt = 3;
    c.win_prob_samples = 4;
    c.max_new_tokens = 16;
    c.master_seed = 21;
    c.selection = SelectionMode::kBestWorst;
    return c;
  }

  static void check_partition(const LoopResult& r) {
    for (const auto& sets : r.preference_sets) {
      ASSERT_EQ(sets.positive.size(), sets.negative.size());
      ASSERT_EQ(sets.positive.size(), sets.retained.size());
      for (std::size_t i = 0; i < sets.positive.size(); ++i) {
        EXPECT_EQ(sets.positive[i].prompt, sets.negative[i].prompt);
        EXPECT_NE(sets.positive[i].response, sets.negative[i].response);
      }
      std::set<std::size_t> unique(sets.retained.begin(), sets.retained.end());
      EXPECT_EQ(unique.size(), sets.retained.size());
    }
  }

  static inline TinyTransformer* model_ = nullptr;
  static inline PromptPool* pool_ = nullptr;
  PreferenceOracle oracle_{OracleSpec{}};
};

TEST_F(LoopTest, SimsSingleIterationShape) {
  LoopConfig c = config();
  c.iterations = 1;
  c.prompts_per_iter = 4;
  const LoopResult r = run_sims(*model_, oracle_, *pool_, c);
  ASSERT_EQ(r.traces.size(), 1u);
  EXPECT_LE(r.traces[0].d_plus, 4u);
  EXPECT_EQ(r.traces[0].d_plus + r.traces[0].skipped_prompts, 4u);
  ASSERT_EQ(r.policies.size(), 2u);
  EXPECT_TRUE(r.policies[0].is_identity());
  EXPECT_EQ(r.policies[1].generation, 1u);
  check_partition(r);
}

TEST_F(LoopTest, GenerationCounterAndReproducibility) {
  const LoopConfig c = config();
  const LoopResult a = run_sims(*model_, oracle_, *pool_, c);
  const LoopResult b = run_sims(*model_, oracle_, *pool_, c);
  for (std::uint32_t t = 0; t < a.policies.size(); ++t) {
    EXPECT_EQ(a.policies[t].generation, t);
    EXPECT_EQ(save_policy(a.policies[t]), save_policy(b.policies[t]));
  }
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    EXPECT_EQ(a.traces[i].t, i + 1);
    EXPECT_EQ(a.traces[i].to_json(), b.traces[i].to_json());
  }
  LoopConfig other = c;
  other.master_seed = 22;
  EXPECT_NE(save_policy(run_sims(*model_, oracle_, *pool_, other).final_policy()), save_policy(a.final_policy()));
}

TEST_F(LoopTest, PromptRankingMatchesBestWorstSelection) {
  const LoopConfig c = config();
  const LoopResult sims = run_sims(*model_, oracle_, *pool_, c);
  const LoopResult pr = run_sims_pr(*model_, oracle_, *pool_, c);
  ASSERT_EQ(sims.preference_sets.size(), pr.preference_sets.size());
  for (std::size_t t = 0; t < sims.preference_sets.size(); ++t) {
    EXPECT_EQ(sims.preference_sets[t], pr.preference_sets[t]) << "iteration " << t + 1;
  }
  check_partition(pr);
}

TEST_F(LoopTest, PromptRankingMinimalShapes) {
  LoopConfig c = config();
  c.responses_per_prompt = 2;
  c.prompts_per_iter = 1;
  c.iterations = 1;
  const LoopResult r = run_sims_pr(*model_, oracle_, *pool_, c);
  EXPECT_EQ(r.traces[0].d_plus, 1u);
  EXPECT_EQ(r.traces[0].d_minus, 1u);
}

TEST_F(LoopTest, ContrastiveBankPersistsAndIsStale) {
  LoopConfig c = config();
  c.variant = Variant::kSimsCs;
  c.bank_capacity = 12;
  c.iterations = 3;
  const LoopResult r = run_sims_cs(*model_, oracle_, *pool_, c);
  ASSERT_EQ(r.bank_states.size(), 3u);
  check_partition(r);
  // Entries carried into later states keep the scores they were created with.
  for (std::size_t s = 1; s < r.bank_states.size(); ++s) {
    for (const auto& later : r.bank_states[s].entries) {
      for (const auto& earlier : r.bank_states[s - 1].entries) {
        if (earlier.sequence == later.sequence) EXPECT_EQ(earlier, later);
      }
    }
    EXPECT_LE(r.bank_states[s].entries.size(), c.bank_capacity);
  }
  const LoopResult again = run_sims_cs(*model_, oracle_, *pool_, c);
  for (std::size_t s = 0; s < r.bank_states.size(); ++s) {
    EXPECT_EQ(save_bank(r.bank_states[s]), save_bank(again.bank_states[s]));
  }
}

TEST_F(LoopTest, ContrastiveCapacityEqualsN) {
  LoopConfig c = config();
  c.variant = Variant::kSimsCs;
  c.bank_capacity = c.prompts_per_iter;
  const LoopResult r = run_variant(*model_, oracle_, *pool_, c);
  for (std::size_t t = 0; t < r.bank_states.size(); ++t) {
    EXPECT_EQ(r.preference_sets[t].positive.size(), r.bank_states[t].entries.size());
  }
}

TEST_F(LoopTest, AllIdenticalResponsesAbortTheIteration) {
  LoopConfig c = config();
  c.temperature = 1e-6f;
  const auto kind = error_kind_of([&] { run_sims(*model_, oracle_, *pool_, c); });
  EXPECT_EQ(kind, ErrorKind::kEmptyPreferenceSet);
}

TEST_F(LoopTest, HouseholderLearnerAndLayerRestriction) {
  LoopConfig c = config();
  c.learner = LearnerKind::kHouseholder;
  c.steer_layers = {1};
  c.iterations = 1;
  const LoopResult r = run_sims(*model_, oracle_, *pool_, c);
  const SteeringPolicy& p = r.final_policy();
  EXPECT_TRUE(p.at({0, Site::kPreAttn}).is_identity());
  EXPECT_TRUE(p.at({0, Site::kPreFfn}).is_identity());
  EXPECT_EQ(p.at({1, Site::kPreAttn}).kind, SteeringKind::kHouseholder);
  EXPECT_EQ(p.learner, "householder");
}

TEST_F(LoopTest, ThresholdSelectionKeepsOnlyClearPairs) {
  LoopConfig c = config();
  c.selection = SelectionMode::kThreshold;
  c.iterations = 1;
  c.prompts_per_iter = 32;
  try {
    const LoopResult r = run_sims(*model_, oracle_, *pool_, c);
    EXPECT_EQ(r.traces[0].d_plus + r.traces[0].skipped_prompts, 32u);
    check_partition(r);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyPreferenceSet);
  }
}

}  // namespace
}  // namespace sims
