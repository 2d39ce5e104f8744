// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/train.hpp"

#include <cmath>

#include "sims/error.hpp"
#include "sims/rng.hpp"

namespace sims {
namespace {

constexpr float kLayerNormEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;
constexpr float kGeluA = 0.044715f;

using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct LayerCache {
  Mat h_in;
  Mat x1_hat, x1;
  Vec rstd1;
  Mat q, k, v;
  std::vector<Mat> probs;  // per head, n x n (causal)
  Mat attn;                // concatenated head outputs, n x d
  Mat h_mid;
  Mat x2_hat, x2;
  Vec rstd2;
  Mat pre, act;
};

void layer_norm_rows(const Mat& x, const Vec& gain, const Vec& bias, Mat& x_hat, Mat& y, Vec& rstd) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  x_hat.resize(n, d);
  y.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const float mean = x.row(i).mean();
    const RowVec centered = x.row(i).array() - mean;
    const float var = centered.squaredNorm() / static_cast<float>(d);
    rstd[i] = 1.0f / std::sqrt(var + kLayerNormEps);
    x_hat.row(i) = centered * rstd[i];
    y.row(i) = x_hat.row(i).cwiseProduct(gain.transpose()) + bias.transpose();
  }
}

// Returns d(loss)/d(input rows); accumulates gain/bias gradients.
Mat layer_norm_backward(const Mat& dy, const Mat& x_hat, const Vec& rstd, const Vec& gain,
                        Vec& dgain, Vec& dbias) {
  const Eigen::Index n = dy.rows();
  const Eigen::Index d = dy.cols();
  Mat dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dgain += dy.row(i).cwiseProduct(x_hat.row(i)).transpose();
    dbias += dy.row(i).transpose();
    const RowVec dxhat = dy.row(i).cwiseProduct(gain.transpose());
    const float m1 = dxhat.mean();
    const float m2 = dxhat.cwiseProduct(x_hat.row(i)).mean();
    dx.row(i) = rstd[i] * (dxhat.array() - m1 - x_hat.row(i).array() * m2).matrix();
  }
  return dx;
}

float gelu(float x) { return 0.5f * x * (1.0f + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

float gelu_grad(float x) {
  const float t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * kGeluC * (1.0f + 3.0f * kGeluA * x * x);
}

std::vector<std::pair<float*, std::size_t>> tensors_of(TinyTransformer& m) {
  std::vector<std::pair<float*, std::size_t>> out;
  m.for_each_tensor([&out](float* p, std::size_t n) { out.emplace_back(p, n); });
  return out;
}

double sequence_loss(const TinyTransformer& model, const TokenSeq& tokens, TinyTransformer* grads) {
  const auto& c = model.config;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (n < 2) return 0.0;
  if (tokens.size() > c.max_seq_len) {
    throw Error(ErrorKind::kSequenceLength, "training sequence exceeds max_seq_len");
  }
  const Eigen::Index d = c.d_model;
  const Eigen::Index heads = c.n_heads;
  const Eigen::Index hdim = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hdim));

  Mat h(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    h.row(i) = model.token_embedding.row(tokens[i]) + model.position_embedding.row(i);
  }

  std::vector<LayerCache> cache(c.n_layers);
  for (std::uint32_t li = 0; li < c.n_layers; ++li) {
    const LayerWeights& w = model.layers[li];
    LayerCache& lc = cache[li];
    lc.h_in = h;
    layer_norm_rows(h, w.ln1_gain, w.ln1_bias, lc.x1_hat, lc.x1, lc.rstd1);
    lc.q = lc.x1 * w.wq.transpose();
    lc.k = lc.x1 * w.wk.transpose();
    lc.v = lc.x1 * w.wv.transpose();
    lc.attn.resize(n, d);
    lc.probs.resize(heads);
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      Mat s = lc.q.middleCols(hd * hdim, hdim) * lc.k.middleCols(hd * hdim, hdim).transpose() * scale;
      Mat& p = lc.probs[hd];
      p = Mat::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const float mx = s.row(i).head(i + 1).maxCoeff();
        float sum = 0.0f;
        for (Eigen::Index j = 0; j <= i; ++j) {
          p(i, j) = std::exp(s(i, j) - mx);
          sum += p(i, j);
        }
        p.row(i).head(i + 1) /= sum;
      }
      lc.attn.middleCols(hd * hdim, hdim) = p * lc.v.middleCols(hd * hdim, hdim);
    }
    lc.h_mid = h + lc.attn * w.wo.transpose();
    layer_norm_rows(lc.h_mid, w.ln2_gain, w.ln2_bias, lc.x2_hat, lc.x2, lc.rstd2);
    lc.pre = lc.x2 * w.w1.transpose();
    lc.pre.rowwise() += w.b1.transpose();
    lc.act = lc.pre.unaryExpr([](float x) { return gelu(x); });
    Mat ffn = lc.act * w.w2.transpose();
    ffn.rowwise() += w.b2.transpose();
    h = lc.h_mid + ffn;
  }

  const Mat logits = h * model.unembedding.transpose();
  const Eigen::Index targets = n - 1;
  double loss = 0.0;
  Mat dlogits = Mat::Zero(n, logits.cols());
  for (Eigen::Index i = 0; i < targets; ++i) {
    const float mx = logits.row(i).maxCoeff();
    const RowVec e = (logits.row(i).array() - mx).exp();
    const float z = e.sum();
    const Token target = tokens[i + 1];
    loss -= static_cast<double>(logits(i, target) - mx) - std::log(static_cast<double>(z));
    if (grads) {
      dlogits.row(i) = e / z;
      dlogits(i, target) -= 1.0f;
    }
  }
  loss /= static_cast<double>(targets);
  if (!grads) return loss;

  dlogits /= static_cast<float>(targets);
  TinyTransformer& g = *grads;
  g.unembedding.noalias() += dlogits.transpose() * h;
  Mat dh = dlogits * model.unembedding;

  for (std::uint32_t li = c.n_layers; li-- > 0;) {
    const LayerWeights& w = model.layers[li];
    LayerWeights& gw = g.layers[li];
    const LayerCache& lc = cache[li];

    // FFN branch.
    gw.b2 += dh.colwise().sum().transpose();
    gw.w2.noalias() += dh.transpose() * lc.act;
    Mat dpre = (dh * w.w2).cwiseProduct(lc.pre.unaryExpr([](float x) { return gelu_grad(x); }));
    gw.b1 += dpre.colwise().sum().transpose();
    gw.w1.noalias() += dpre.transpose() * lc.x2;
    const Mat dx2 = dpre * w.w1;
    Mat dmid = dh + layer_norm_backward(dx2, lc.x2_hat, lc.rstd2, w.ln2_gain, gw.ln2_gain, gw.ln2_bias);

    // Attention branch.
    gw.wo.noalias() += dmid.transpose() * lc.attn;
    const Mat dattn = dmid * w.wo;
    Mat dq(n, d), dk(n, d), dv(n, d);
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const Mat& p = lc.probs[hd];
      const auto d_out = dattn.middleCols(hd * hdim, hdim);
      const Mat dp = d_out * lc.v.middleCols(hd * hdim, hdim).transpose();
      dv.middleCols(hd * hdim, hdim) = p.transpose() * d_out;
      Mat ds = p.cwiseProduct(dp);
      const Vec row_dot = ds.rowwise().sum();
      ds -= (p.array().colwise() * row_dot.array()).matrix();
      dq.middleCols(hd * hdim, hdim) = ds * lc.k.middleCols(hd * hdim, hdim) * scale;
      dk.middleCols(hd * hdim, hdim) = ds.transpose() * lc.q.middleCols(hd * hdim, hdim) * scale;
    }
    gw.wq.noalias() += dq.transpose() * lc.x1;
    gw.wk.noalias() += dk.transpose() * lc.x1;
    gw.wv.noalias() += dv.transpose() * lc.x1;
    const Mat dx1 = dq * w.wq + dk * w.wk + dv * w.wv;
    dh = dmid + layer_norm_backward(dx1, lc.x1_hat, lc.rstd1, w.ln1_gain, gw.ln1_gain, gw.ln1_bias);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    g.token_embedding.row(tokens[i]) += dh.row(i);
    g.position_embedding.row(i) += dh.row(i);
  }
  return loss;
}

}  // namespace

TinyTransformer zeros_like(const TinyTransformer& model) {
  TinyTransformer z = model;
  z.for_each_tensor([](float* p, std::size_t n) { std::fill(p, p + n, 0.0f); });
  return z;
}

double loss_and_gradient(const TinyTransformer& model, const TokenSeq& tokens, TinyTransformer& grads) {
  return sequence_loss(model, tokens, &grads);
}

double corpus_loss(const TinyTransformer& model, const std::vector<TokenSeq>& corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    if (seq.size() < 2) continue;
    total += sequence_loss(model, seq, nullptr) * static_cast<double>(seq.size() - 1);
    count += seq.size() - 1;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

TinyTransformer pretrain_on_corpus(const TinyTransformer& model, const std::vector<TokenSeq>& corpus,
                                   const TrainOptions& options, TrainReport* report) {
  if (corpus.empty()) throw Error(ErrorKind::kInsufficientData, "empty training corpus");
  if (options.batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (!(options.learning_rate > 0.0f)) throw Error(ErrorKind::kConfig, "learning rate must be > 0");

  std::size_t holdout = 0;
  if (corpus.size() >= 2) {
    holdout = std::max<std::size_t>(
        1, static_cast<std::size_t>(options.holdout_fraction * static_cast<double>(corpus.size())));
    holdout = std::min(holdout, corpus.size() - 1);
  }
  const std::size_t n_train = corpus.size() - holdout;
  const std::vector<TokenSeq> heldout =
      holdout ? std::vector<TokenSeq>(corpus.end() - static_cast<std::ptrdiff_t>(holdout), corpus.end())
              : corpus;

  TinyTransformer m = model;
  TrainReport local;
  local.initial_heldout_loss = corpus_loss(m, heldout);
  if (options.steps == 0) {
    local.final_heldout_loss = local.initial_heldout_loss;
    if (report) *report = local;
    return m;
  }

  TinyTransformer grads = zeros_like(m);
  TinyTransformer adam_m = zeros_like(m);
  TinyTransformer adam_v = zeros_like(m);
  auto params = tensors_of(m);
  auto g = tensors_of(grads);
  auto mom = tensors_of(adam_m);
  auto vel = tensors_of(adam_v);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.99;
  constexpr double kEps = 1e-8;
  Rng rng(derive_seed(options.seed, {stream::kTrain, model.config.rng_seed}));

  for (std::uint32_t step = 1; step <= options.steps; ++step) {
    for (auto& [p, n] : g) std::fill(p, p + n, 0.0f);
    double batch_loss = 0.0;
    for (std::uint32_t b = 0; b < options.batch_size; ++b) {
      const auto& seq = corpus[rng.below(n_train)];
      batch_loss += sequence_loss(m, seq, &grads);
    }
    batch_loss /= options.batch_size;
    if (!std::isfinite(batch_loss)) {
      throw Error(ErrorKind::kTrainingDivergence, "non-finite loss at step " + std::to_string(step));
    }

    const float inv_batch = 1.0f / static_cast<float>(options.batch_size);
    double sq = 0.0;
    for (auto& [p, n] : g) {
      for (std::size_t i = 0; i < n; ++i) {
        p[i] *= inv_batch;
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw Error(ErrorKind::kTrainingDivergence, "non-finite gradient at step " + std::to_string(step));
    }
    const double clip = (options.grad_clip > 0 && norm > options.grad_clip) ? options.grad_clip / norm : 1.0;
    const double bc1 = 1.0 - std::pow(kBeta1, step);
    const double bc2 = 1.0 - std::pow(kBeta2, step);
    for (std::size_t t = 0; t < params.size(); ++t) {
      float* p = params[t].first;
      const float* gr = g[t].first;
      float* mt = mom[t].first;
      float* vt = vel[t].first;
      for (std::size_t i = 0; i < params[t].second; ++i) {
        const double gi = gr[i] * clip;
        mt[i] = static_cast<float>(kBeta1 * mt[i] + (1.0 - kBeta1) * gi);
        vt[i] = static_cast<float>(kBeta2 * vt[i] + (1.0 - kBeta2) * gi * gi);
        const double update = (mt[i] / bc1) / (std::sqrt(vt[i] / bc2) + kEps);
        p[i] = static_cast<float>(p[i] - options.learning_rate * update);
      }
    }
  }

  local.steps = options.steps;
  local.final_heldout_loss = corpus_loss(m, heldout);
  if (!std::isfinite(local.final_heldout_loss)) {
    throw Error(ErrorKind::kTrainingDivergence, "non-finite held-out loss after training");
  }
  if (report) *report = local;
  return m;
}

}  // namespace sims
