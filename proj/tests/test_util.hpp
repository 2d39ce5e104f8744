// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "sims/error.hpp"
#include "sims/rng.hpp"
#include "sims/tinylm.hpp"

namespace sims::testing {

inline ModelConfig small_config(std::uint64_t seed = 7) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 48;
  c.rng_seed = seed;
  return c;
}

// Fresh init weights are tiny (std 0.02); scaling them up gives logits and
// activations with enough spread for the property tests to bite.
inline TinyTransformer random_model(const ModelConfig& c, float scale = 10.0f) {
  TinyTransformer m = init_model(c);
  for (auto& l : m.layers) {
    for (Mat* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2}) *w *= scale;
  }
  m.token_embedding *= scale;
  m.position_embedding *= scale;
  m.unembedding *= scale;
  return m;
}

inline TokenSeq random_tokens(Rng& rng, std::size_t n) {
  TokenSeq t(n);
  for (auto& x : t) x = static_cast<Token>(rng.below(256));
  return t;
}

inline std::vector<float> random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return v;
}

inline std::vector<float> random_unit(Rng& rng, std::size_t d) {
  std::vector<float> v = random_vector(rng, d);
  double n = 0.0;
  for (float x : v) n += double(x) * x;
  n = std::sqrt(n);
  for (auto& x : v) x = static_cast<float>(x / n);
  return v;
}

template <typename F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a sims::Error";
  return ErrorKind::kConfig;
}

}  // namespace sims::testing
