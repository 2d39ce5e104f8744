// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sims/tinylm.hpp"

namespace sims {

struct TrainOptions {
  std::uint32_t steps = 500;
  float learning_rate = 3e-3f;
  std::uint32_t batch_size = 8;
  // Fraction of the corpus (taken from the end) held out for the before/after
  // loss measurement. At least one sequence is held out when the corpus has
  // two or more.
  double holdout_fraction = 0.1;
  float grad_clip = 1.0f;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  std::uint32_t steps = 0;
};

// Mean next-token cross-entropy over all positions of all sequences.
double corpus_loss(const TinyTransformer& model, const std::vector<TokenSeq>& corpus);

// Loss of one sequence and its gradient, laid out like the model itself.
double loss_and_gradient(const TinyTransformer& model, const TokenSeq& tokens, TinyTransformer& grads);

// Zero-filled tensor set shaped like `model`.
TinyTransformer zeros_like(const TinyTransformer& model);

// Adam on next-token cross-entropy. steps == 0 returns the model unchanged.
// Throws insufficient-data on an empty corpus and training-divergence on a
// non-finite loss.
TinyTransformer pretrain_on_corpus(const TinyTransformer& model, const std::vector<TokenSeq>& corpus,
                                   const TrainOptions& options, TrainReport* report = nullptr);

}  // namespace sims
