// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/tinylm.hpp"

#include <cmath>
#include <limits>

#include "sims/error.hpp"
#include "sims/rng.hpp"

namespace sims {

std::string_view to_string(Site site) noexcept {
  return site == Site::kPreAttn ? "pre_attn" : "pre_ffn";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfig, what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (d_model < 1) fail("d_model must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (max_seq_len < 2) fail("max_seq_len must be >= 2");
  if (d_model % n_heads != 0) {
    fail("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
         std::to_string(d_model) + ")");
  }
  if (vocab_size < static_cast<std::uint32_t>(vocab::kSize)) {
    fail("vocab_size must cover the byte vocabulary (" + std::to_string(vocab::kSize) + ")");
  }
}

std::size_t TinyTransformer::num_parameters() const {
  std::size_t n = 0;
  for_each_tensor([&n](const float*, std::size_t size) { n += size; });
  return n;
}

TinyTransformer init_model(const ModelConfig& config) {
  config.validate();
  const Eigen::Index d = config.d_model;
  const Eigen::Index f = config.d_ff;
  const Eigen::Index v = config.vocab_size;
  TinyTransformer m;
  m.config = config;
  m.token_embedding.resize(v, d);
  m.position_embedding.resize(config.max_seq_len, d);
  m.unembedding.resize(v, d);
  m.layers.resize(config.n_layers);
  for (auto& l : m.layers) {
    l.ln1_gain = Vec::Ones(d);
    l.ln1_bias = Vec::Zero(d);
    l.wq.resize(d, d), l.wk.resize(d, d), l.wv.resize(d, d), l.wo.resize(d, d);
    l.ln2_gain = Vec::Ones(d);
    l.ln2_bias = Vec::Zero(d);
    l.w1.resize(f, d);
    l.b1 = Vec::Zero(f);
    l.w2.resize(d, f);
    l.b2 = Vec::Zero(d);
  }

  Rng rng(derive_seed(config.rng_seed, {stream::kInit}));
  auto gaussian = [&rng](Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(0.02 * rng.normal());
  };
  gaussian(m.token_embedding);
  gaussian(m.position_embedding);
  for (auto& l : m.layers) {
    gaussian(l.wq), gaussian(l.wk), gaussian(l.wv), gaussian(l.wo);
    gaussian(l.w1), gaussian(l.w2);
  }
  gaussian(m.unembedding);
  return m;
}

std::uint32_t weights_checksum(const TinyTransformer& model) {
  ByteWriter w;
  model.for_each_tensor([&w](const float* data, std::size_t n) { w.put_f32_array({data, n}); });
  return crc32(w.bytes());
}

namespace {

constexpr float kLayerNormEps = 1e-5f;

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias) {
  const float mean = x.mean();
  const Vec centered = x.array() - mean;
  const float var = centered.squaredNorm() / static_cast<float>(x.size());
  const float rstd = 1.0f / std::sqrt(var + kLayerNormEps);
  return (centered * rstd).cwiseProduct(gain) + bias;
}

inline float gelu(float x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(kC * (x + 0.044715f * x * x * x)));
}

// Incremental (KV-cached) evaluation of the network one token at a time.
// Both the full-sequence forward pass and sampling run through step(), so
// they agree bit for bit.
class Decoder {
 public:
  Decoder(const TinyTransformer& model, const SteeringPolicy* policy)
      : model_(&model), policy_(policy) {
    const auto& c = model.config;
    keys_.assign(c.n_layers, Mat(c.max_seq_len, c.d_model));
    values_.assign(c.n_layers, Mat(c.max_seq_len, c.d_model));
  }

  std::size_t length() const noexcept { return length_; }

  // Feeds one token. Returns the logits for the next position when
  // `want_logits` is set. `sink`, if non-null, receives hook-site vectors.
  template <typename Sink>
  Vec step(Token token, bool want_logits, Sink* sink) {
    const auto& m = *model_;
    const auto& c = m.config;
    if (length_ >= c.max_seq_len) {
      throw Error(ErrorKind::kSequenceLength, "sequence exceeds max_seq_len " +
                                                  std::to_string(c.max_seq_len));
    }
    if (token < 0 || static_cast<std::uint32_t>(token) >= c.vocab_size) {
      throw Error(ErrorKind::kProtocol, "token id " + std::to_string(token) + " outside vocabulary");
    }
    const auto pos = static_cast<Eigen::Index>(length_);
    const Eigen::Index d = c.d_model;
    const Eigen::Index dh = d / c.n_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Vec h = m.token_embedding.row(token).transpose() + m.position_embedding.row(pos).transpose();
    Vec scores(pos + 1);
    Vec attn(d);
    for (std::uint32_t li = 0; li < c.n_layers; ++li) {
      const LayerWeights& w = m.layers[li];
      if (sink) (*sink)(li, Site::kPreAttn, h);
      Vec steered = h;
      if (policy_) apply_inplace(policy_->layers[li].pre_attn, {steered.data(), static_cast<std::size_t>(steered.size())});
      const Vec x = layer_norm(steered, w.ln1_gain, w.ln1_bias);
      keys_[li].row(pos) = (w.wk * x).transpose();
      values_[li].row(pos) = (w.wv * x).transpose();
      const Vec q = w.wq * x;
      for (Eigen::Index hd = 0; hd < c.n_heads; ++hd) {
        const auto kblock = keys_[li].block(0, hd * dh, pos + 1, dh);
        scores.noalias() = kblock * q.segment(hd * dh, dh);
        scores *= scale;
        const float mx = scores.maxCoeff();
        scores = (scores.array() - mx).exp();
        scores /= scores.sum();
        attn.segment(hd * dh, dh).noalias() =
            values_[li].block(0, hd * dh, pos + 1, dh).transpose() * scores;
      }
      Vec mid = (policy_ && policy_->steer_skip ? steered : h) + w.wo * attn;
      if (sink) (*sink)(li, Site::kPreFfn, mid);
      Vec steered_mid = mid;
      if (policy_) apply_inplace(policy_->layers[li].pre_ffn, {steered_mid.data(), static_cast<std::size_t>(steered_mid.size())});
      const Vec y = layer_norm(steered_mid, w.ln2_gain, w.ln2_bias);
      Vec hidden = w.w1 * y + w.b1;
      for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i]);
      h = (policy_ && policy_->steer_skip ? steered_mid : mid) + w.w2 * hidden + w.b2;
    }
    ++length_;
    if (!want_logits) return {};
    return m.unembedding * h;
  }

  Vec step(Token token, bool want_logits) {
    return step<NoSink>(token, want_logits, nullptr);
  }

 private:
  struct NoSink {
    void operator()(std::uint32_t, Site, const Vec&) {}
  };

  const TinyTransformer* model_;
  const SteeringPolicy* policy_;
  std::vector<Mat> keys_;
  std::vector<Mat> values_;
  std::size_t length_ = 0;
};

void check_policy_shape(const TinyTransformer& model, const SteeringPolicy& policy) {
  if (policy.num_layers() != model.config.n_layers) {
    throw Error(ErrorKind::kSteeringShape, "policy has " + std::to_string(policy.num_layers()) +
                                               " layers, model has " +
                                               std::to_string(model.config.n_layers));
  }
  if (policy.d_model != model.config.d_model) {
    throw Error(ErrorKind::kSteeringShape, "policy width " + std::to_string(policy.d_model) +
                                               " != model width " +
                                               std::to_string(model.config.d_model));
  }
}

ForwardResult run_forward(const TinyTransformer& model, const SteeringPolicy* policy,
                          const TokenSeq& tokens, CaptureSites capture) {
  const auto& c = model.config;
  if (tokens.empty()) throw Error(ErrorKind::kSequenceLength, "empty input");
  if (tokens.size() > c.max_seq_len) {
    throw Error(ErrorKind::kSequenceLength, "input of " + std::to_string(tokens.size()) +
                                                " tokens exceeds max_seq_len " +
                                                std::to_string(c.max_seq_len));
  }
  const auto n = static_cast<Eigen::Index>(tokens.size());
  ForwardResult out;
  out.logits.resize(n, c.vocab_size);

  // hidden[] index: layer * sites + site offset.
  const std::size_t sites = capture.count();
  out.hidden.resize(c.n_layers * sites);
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    std::size_t k = l * sites;
    if (capture.pre_attn) out.hidden[k++] = {l, Site::kPreAttn, Mat(n, c.d_model)};
    if (capture.pre_ffn) out.hidden[k] = {l, Site::kPreFfn, Mat(n, c.d_model)};
  }

  Decoder dec(model, policy);
  Eigen::Index row = 0;
  auto sink = [&](std::uint32_t layer, Site site, const Vec& v) {
    if (site == Site::kPreAttn && !capture.pre_attn) return;
    if (site == Site::kPreFfn && !capture.pre_ffn) return;
    const std::size_t k = layer * sites + ((site == Site::kPreFfn && capture.pre_attn) ? 1 : 0);
    out.hidden[k].vectors.row(row) = v.transpose();
  };
  for (Token t : tokens) {
    Vec logits = sites ? dec.step(t, true, &sink) : dec.step(t, true);
    out.logits.row(row) = logits.transpose();
    ++row;
  }
  return out;
}

Token sample_token(const Vec& logits, const SamplingOptions& opt, Rng& rng) {
  auto allowed = [](Eigen::Index i) { return i != vocab::kBos && i != vocab::kPad; };
  if (opt.greedy) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      if (allowed(i) && (best < 0 || logits[i] > logits[best])) best = i;
    }
    return static_cast<Token>(best);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (allowed(i)) mx = std::max(mx, static_cast<double>(logits[i]));
  }
  std::vector<double> p(static_cast<std::size_t>(logits.size()), 0.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!allowed(i)) continue;
    p[i] = std::exp((logits[i] - mx) / opt.temperature);
    total += p[i];
  }
  const double r = rng.uniform() * total;
  double acc = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (r < acc) return static_cast<Token>(i);
  }
  return static_cast<Token>(last);
}

}  // namespace

ForwardResult forward(const TinyTransformer& model, const TokenSeq& tokens, CaptureSites capture) {
  return run_forward(model, nullptr, tokens, capture);
}

ForwardResult forward_steered(const TinyTransformer& model, const SteeringPolicy& policy,
                              const TokenSeq& tokens, CaptureSites capture) {
  check_policy_shape(model, policy);
  return run_forward(model, &policy, tokens, capture);
}

std::vector<TokenSeq> generate(const TinyTransformer& model, const SteeringPolicy& policy,
                               const TokenSeq& prompt, const SamplingOptions& options) {
  if (!(options.temperature > 0.0f) || !std::isfinite(options.temperature)) {
    throw Error(ErrorKind::kSamplingConfig, "temperature must be > 0");
  }
  if (options.num_responses < 1) throw Error(ErrorKind::kSamplingConfig, "K must be >= 1");
  if (options.max_new_tokens < 1) {
    throw Error(ErrorKind::kSamplingConfig, "max_new_tokens must be >= 1");
  }
  if (prompt.empty()) throw Error(ErrorKind::kSequenceLength, "empty prompt");
  const std::size_t needed = prompt.size() + 1 + options.max_new_tokens;
  if (needed > model.config.max_seq_len) {
    throw Error(ErrorKind::kSequenceLength,
                "prompt of " + std::to_string(prompt.size()) + " tokens plus marker and " +
                    std::to_string(options.max_new_tokens) + " new tokens exceeds max_seq_len " +
                    std::to_string(model.config.max_seq_len));
  }
  check_policy_shape(model, policy);
  const SteeringPolicy* p = policy.is_identity() && !policy.steer_skip ? nullptr : &policy;

  // The prompt prefix is shared by all K samples.
  Decoder prefix(model, p);
  for (Token t : prompt) prefix.step(t, false);
  const Vec first_logits = prefix.step(vocab::kResponseMarker, true);

  std::vector<TokenSeq> out(options.num_responses);
  for (std::uint32_t k = 0; k < options.num_responses; ++k) {
    Rng rng(derive_seed(options.seed, {k}));
    Decoder dec = prefix;
    Vec logits = first_logits;
    TokenSeq& y = out[k];
    for (std::uint32_t i = 0; i < options.max_new_tokens; ++i) {
      const Token t = sample_token(logits, options, rng);
      if (t == vocab::kEos) break;
      y.push_back(t);
      if (i + 1 < options.max_new_tokens) logits = dec.step(t, true);
    }
  }
  return out;
}

double mean_log_likelihood(const TinyTransformer& model, const SteeringPolicy& policy,
                           const TokenSeq& prompt, const TokenSeq& response) {
  const TokenSeq joined = join_prompt_response(prompt, response);
  const ForwardResult fr = forward_steered(model, policy, joined);
  const std::size_t off = response_offset(prompt);
  double total = 0.0;
  for (std::size_t j = 0; j <= response.size(); ++j) {
    const Eigen::Index row = static_cast<Eigen::Index>(off + j - 1);
    const Token target = j < response.size() ? response[j] : vocab::kEos;
    const auto logits = fr.logits.row(row);
    const double mx = logits.maxCoeff();
    double z = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
    total += logits[target] - mx - std::log(z);
  }
  return total / static_cast<double>(response.size() + 1);
}

Bytes save_model(const TinyTransformer& model) {
  const auto& c = model.config;
  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kModelMagic.data()), kModelMagic.size()});
  w.put_u8(kModelFormatVersion);
  w.put_u32(c.n_layers);
  w.put_u32(c.d_model);
  w.put_u32(c.n_heads);
  w.put_u32(c.d_ff);
  w.put_u32(c.vocab_size);
  w.put_u32(c.max_seq_len);
  w.put_u64(c.rng_seed);
  model.for_each_tensor([&w](const float* data, std::size_t n) { w.put_f32_array({data, n}); });
  w.put_crc();
  return std::move(w).take();
}

TinyTransformer load_model(std::span<const std::uint8_t> data) {
  ByteReader r = open_artifact(data, kModelMagic, kModelFormatVersion);
  ModelConfig c;
  c.n_layers = r.get_u32();
  c.d_model = r.get_u32();
  c.n_heads = r.get_u32();
  c.d_ff = r.get_u32();
  c.vocab_size = r.get_u32();
  c.max_seq_len = r.get_u32();
  c.rng_seed = r.get_u64();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kArtifactFormat, std::string("checkpoint config invalid: ") + e.what());
  }
  // Shapes come from init_model; the payload then overwrites every weight.
  TinyTransformer m = init_model(c);
  m.for_each_tensor([&r](float* out, std::size_t n) { r.get_f32_array({out, n}); });
  if (r.remaining() != 0) throw Error(ErrorKind::kArtifactFormat, "trailing bytes after weights");
  return m;
}

}  // namespace sims
