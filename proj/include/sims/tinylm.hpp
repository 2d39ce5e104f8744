// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sims/binary_io.hpp"
#include "sims/model_config.hpp"
#include "sims/steering.hpp"
#include "sims/tokenizer.hpp"

namespace sims {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXf;

// Weights of one pre-norm block. Linear maps are stored (out x in).
struct LayerWeights {
  Vec ln1_gain, ln1_bias;
  Mat wq, wk, wv, wo;
  Vec ln2_gain, ln2_bias;
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

// Decoder-only transformer. Per block:
//
//   h'_l = h_{l-1} + MHA_l(LN1(f_l(h_{l-1})))
//   h_l  = h'_l    + FFN_l(LN2(f'_l(h'_l)))
//
// with logits = W_U h_L (no final norm). Layer norms live inside the
// branches, so the hook sites see the raw residual stream.
struct TinyTransformer {
  ModelConfig config;
  Mat token_embedding;     // vocab x d
  Mat position_embedding;  // max_seq_len x d
  std::vector<LayerWeights> layers;
  Mat unembedding;         // vocab x d

  // Visits every tensor as (pointer, size) in the fixed checkpoint order:
  // token_embedding, position_embedding, then per block ln1_gain, ln1_bias,
  // wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2, then unembedding.
  // Matrices are row-major.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit_tensors(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_tensors(*this, f);
  }

  std::uint32_t num_hook_slots() const noexcept { return 2 * config.n_layers; }
  std::size_t num_parameters() const;

 private:
  template <typename Self, typename F>
  static void visit_tensors(Self& m, F& f) {
    auto v = [&f](auto& t) { f(t.data(), static_cast<std::size_t>(t.size())); };
    v(m.token_embedding);
    v(m.position_embedding);
    for (auto& l : m.layers) {
      v(l.ln1_gain), v(l.ln1_bias), v(l.wq), v(l.wk), v(l.wv), v(l.wo);
      v(l.ln2_gain), v(l.ln2_bias), v(l.w1), v(l.b1), v(l.w2), v(l.b2);
    }
    v(m.unembedding);
  }
};

// Weights drawn N(0, 0.02) from a stream seeded by config.rng_seed; layer-norm
// gains start at 1 and all biases at 0.
TinyTransformer init_model(const ModelConfig& config);

// CRC32 over the weight bytes in checkpoint order.
std::uint32_t weights_checksum(const TinyTransformer& model);

struct CaptureSites {
  bool pre_attn = false;
  bool pre_ffn = false;

  static constexpr CaptureSites none() { return {}; }
  static constexpr CaptureSites both() { return {true, true}; }
  std::size_t count() const noexcept { return (pre_attn ? 1u : 0u) + (pre_ffn ? 1u : 0u); }
};

struct HiddenState {
  std::uint32_t layer = 0;
  Site site = Site::kPreAttn;
  Mat vectors;  // tokens x d_model
};

struct ForwardResult {
  Mat logits;  // tokens x vocab
  // Ordered by layer, pre-attn before pre-ffn.
  std::vector<HiddenState> hidden;
};

ForwardResult forward(const TinyTransformer& model, const TokenSeq& tokens,
                      CaptureSites capture = CaptureSites::none());

ForwardResult forward_steered(const TinyTransformer& model, const SteeringPolicy& policy,
                              const TokenSeq& tokens, CaptureSites capture = CaptureSites::none());

struct SamplingOptions {
  std::uint32_t num_responses = 1;   // K
  std::uint32_t max_new_tokens = 32;
  float temperature = 1.0f;
  bool greedy = false;               // argmax decoding; temperature is ignored
  std::uint64_t seed = 0;
};

// Samples K continuations of prompt ‖ response-marker. Response k draws from
// derive_seed(seed, {k}), so each is a pure function of its inputs. The
// terminating EOS is not part of the returned sequence.
std::vector<TokenSeq> generate(const TinyTransformer& model, const SteeringPolicy& policy,
                               const TokenSeq& prompt, const SamplingOptions& options);

// Mean per-token log-probability of response followed by EOS given prompt.
double mean_log_likelihood(const TinyTransformer& model, const SteeringPolicy& policy,
                           const TokenSeq& prompt, const TokenSeq& response);

inline constexpr std::string_view kModelMagic = "SIMSLM01";
inline constexpr std::uint8_t kModelFormatVersion = 1;

Bytes save_model(const TinyTransformer& model);
TinyTransformer load_model(std::span<const std::uint8_t> data);

}  // namespace sims
