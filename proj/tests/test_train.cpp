// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "sims/prompts.hpp"
#include "sims/train.hpp"
#include "test_util.hpp"

namespace sims {
namespace {

using testing::error_kind_of;

// Central differences in double against the manual backward pass.
TEST(Gradient, MatchesFiniteDifferences) {
  ModelConfig c = testing::small_config(3);
  c.n_layers = 2;
  c.d_model = 8;
  c.d_ff = 12;
  c.max_seq_len = 12;
  const TinyTransformer m = testing::random_model(c, 20.0f);
  const TokenSeq tokens = {vocab::kBos, 'a', 'b', vocab::kBos, 'c', 'a', vocab::kEos};

  TinyTransformer grads = zeros_like(m);
  loss_and_gradient(m, tokens, grads);

  std::vector<std::pair<const float*, std::size_t>> g_tensors;
  grads.for_each_tensor([&](const float* p, std::size_t n) { g_tensors.emplace_back(p, n); });

  TinyTransformer probe = m;
  std::vector<std::pair<float*, std::size_t>> p_tensors;
  probe.for_each_tensor([&](float* p, std::size_t n) { p_tensors.emplace_back(p, n); });

  Rng rng(17);
  int checked = 0;
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    for (int s = 0; s < 4; ++s) {
      const std::size_t i = rng.below(p_tensors[t].second);
      float& w = p_tensors[t].first[i];
      const float saved = w;
      const float h = 1e-2f * std::max(1.0f, std::abs(saved));
      TinyTransformer scratch = zeros_like(m);
      w = saved + h;
      const double up = loss_and_gradient(probe, tokens, scratch);
      w = saved - h;
      const double down = loss_and_gradient(probe, tokens, scratch);
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g_tensors[t].first[i];
      EXPECT_NEAR(analytic, numeric, 2e-3 + 5e-2 * std::abs(numeric)) << "tensor " << t << " index " << i;
      ++checked;
    }
  }
  EXPECT_GT(checked, 40);
}

TEST(Pretrain, ZeroStepsIsNoOp) {
  const TinyTransformer m = init_model(testing::small_config());
  const std::vector<TokenSeq> corpus = {encode("abcabc"), encode("bcabca")};
  TrainOptions o;
  o.steps = 0;
  EXPECT_EQ(weights_checksum(pretrain_on_corpus(m, corpus, o)), weights_checksum(m));
}

TEST(Pretrain, EmptyCorpusAndBadOptions) {
  const TinyTransformer m = init_model(testing::small_config());
  EXPECT_EQ(error_kind_of([&] { pretrain_on_corpus(m, {}, TrainOptions{}); }), ErrorKind::kInsufficientData);
  TrainOptions o;
  o.batch_size = 0;
  EXPECT_EQ(error_kind_of([&] { pretrain_on_corpus(m, {encode("ab")}, o); }), ErrorKind::kConfig);
}

TEST(Pretrain, DivergenceIsReported) {
  TinyTransformer m = init_model(testing::small_config());
  m.unembedding(0, 0) = std::numeric_limits<float>::quiet_NaN();
  TrainOptions o;
  o.steps = 2;
  EXPECT_EQ(error_kind_of([&] { pretrain_on_corpus(m, {encode("ab"), encode("ba"), encode("aa")}, o); }),
            ErrorKind::kTrainingDivergence);
}

TEST(Pretrain, HeldOutLossDrops) {
  ModelConfig c = testing::small_config();
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 64;
  c.max_seq_len = 64;
  CorpusSpec spec;
  spec.count = 400;
  const auto corpus = make_pretraining_corpus(PromptSpec::defaults(), spec, 5);
  TrainOptions o;
  o.steps = 500;
  TrainReport report;
  const TinyTransformer trained = pretrain_on_corpus(init_model(c), corpus, o, &report);
  EXPECT_LT(report.final_heldout_loss, report.initial_heldout_loss);
  EXPECT_EQ(report.steps, 500u);
  // Measured independently on the same tail slice.
  const std::size_t holdout = 40;
  const std::vector<TokenSeq> tail(corpus.end() - holdout, corpus.end());
  EXPECT_NEAR(corpus_loss(trained, tail), report.final_heldout_loss, 1e-9);
  EXPECT_LT(corpus_loss(trained, tail), corpus_loss(init_model(c), tail));
}

}  // namespace
}  // namespace sims
