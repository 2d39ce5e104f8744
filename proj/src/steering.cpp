// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/steering.hpp"

#include <algorithm>
#include <cmath>

#include "sims/error.hpp"

namespace sims {
namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

void check_unit(const std::vector<float>& v) {
  if (v.empty()) throw Error(ErrorKind::kSteeringShape, "empty direction");
  const double norm = std::sqrt(dot(v, v));
  if (!(std::abs(norm - 1.0) <= 1e-6)) {
    throw Error(ErrorKind::kSteeringShape, "direction is not unit norm (" + std::to_string(norm) + ")");
  }
}

void check_dim(const SteeringFunction& f, std::size_t dim) {
  if (!f.is_identity() && f.direction.size() != dim) {
    throw Error(ErrorKind::kSteeringShape, "function width " + std::to_string(f.direction.size()) +
                                               " does not match vector width " + std::to_string(dim));
  }
}

// Per-slot mean of the vectors, accumulated in double.
std::vector<double> mean_of(const std::vector<std::vector<float>>& rows, std::size_t dim) {
  std::vector<double> m(dim, 0.0);
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error(ErrorKind::kSteeringShape, "ragged activation set");
    for (std::size_t i = 0; i < dim; ++i) m[i] += r[i];
  }
  for (double& x : m) x /= static_cast<double>(rows.size());
  return m;
}

struct SlotStats {
  std::vector<double> mean_pos;
  std::vector<double> mean_neg;
  std::vector<double> diff;
  double norm = 0.0;
};

template <typename Fn>
SteeringMap for_each_slot(const ActivationSet& positive, const ActivationSet& negative,
                          std::size_t min_samples, Fn&& fn) {
  if (positive.slots.empty() || negative.slots.empty()) {
    throw Error(ErrorKind::kInsufficientData, "activation set has no slots");
  }
  SteeringMap out;
  for (const auto& [key, pos_rows] : positive.slots) {
    auto it = negative.slots.find(key);
    if (it == negative.slots.end()) {
      throw Error(ErrorKind::kInsufficientData, "negative set lacks a slot present in the positive set");
    }
    const auto& neg_rows = it->second;
    if (pos_rows.size() < min_samples || neg_rows.size() < min_samples) {
      throw Error(ErrorKind::kInsufficientData,
                  "slot (layer " + std::to_string(key.layer) + ", " + std::string(to_string(key.site)) +
                      ") needs at least " + std::to_string(min_samples) + " samples per side");
    }
    const std::size_t dim = pos_rows.front().size();
    if (dim == 0 || neg_rows.front().size() != dim) {
      throw Error(ErrorKind::kSteeringShape, "activation widths disagree between sides");
    }
    SlotStats s;
    s.mean_pos = mean_of(pos_rows, dim);
    s.mean_neg = mean_of(neg_rows, dim);
    s.diff.resize(dim);
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      s.diff[i] = s.mean_pos[i] - s.mean_neg[i];
      sq += s.diff[i] * s.diff[i];
    }
    s.norm = std::sqrt(sq);
    if (!std::isfinite(s.norm)) throw Error(ErrorKind::kInsufficientData, "non-finite activations");
    out.emplace(key, fn(s));
  }
  for (const auto& [key, _] : negative.slots) {
    if (!positive.slots.contains(key)) {
      throw Error(ErrorKind::kInsufficientData, "positive set lacks a slot present in the negative set");
    }
  }
  return out;
}

std::vector<float> unit_from(const std::vector<double>& v, double norm) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

class MeanDiffLearner final : public SteeringLearner {
 public:
  explicit MeanDiffLearner(float strength) : strength_(strength) {}
  std::string name() const override { return "mean-diff"; }
  SteeringMap learn(const ActivationSet& p, const ActivationSet& n) const override {
    return learn_mean_diff(p, n, strength_);
  }

 private:
  float strength_;
};

class HouseholderLearner final : public SteeringLearner {
 public:
  std::string name() const override { return "householder"; }
  SteeringMap learn(const ActivationSet& p, const ActivationSet& n) const override {
    return learn_householder(p, n);
  }
};

}  // namespace

std::string_view to_string(SteeringKind kind) noexcept {
  switch (kind) {
    case SteeringKind::kIdentity: return "identity";
    case SteeringKind::kAdditive: return "additive";
    case SteeringKind::kHouseholder: return "householder";
  }
  return "?";
}

std::string_view to_string(LearnerKind kind) noexcept {
  return kind == LearnerKind::kMeanDiff ? "mean-diff" : "householder";
}

LearnerKind parse_learner_kind(std::string_view name) {
  if (name == "mean-diff" || name == "mean_diff" || name == "caa") return LearnerKind::kMeanDiff;
  if (name == "householder" || name == "hpr") return LearnerKind::kHouseholder;
  throw Error(ErrorKind::kConfig, "unknown learner '" + std::string(name) + "'");
}

SteeringFunction SteeringFunction::additive(std::vector<float> direction, float strength) {
  check_unit(direction);
  SteeringFunction f;
  f.kind = SteeringKind::kAdditive;
  f.direction = std::move(direction);
  f.strength = strength;
  return f;
}

SteeringFunction SteeringFunction::householder(std::vector<float> normal, float bias) {
  check_unit(normal);
  SteeringFunction f;
  f.kind = SteeringKind::kHouseholder;
  f.direction = std::move(normal);
  f.bias = bias;
  return f;
}

void apply_inplace(const SteeringFunction& f, std::span<float> h) {
  check_dim(f, h.size());
  switch (f.kind) {
    case SteeringKind::kIdentity:
      return;
    case SteeringKind::kAdditive:
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += f.strength * f.direction[i];
      return;
    case SteeringKind::kHouseholder: {
      const double s = dot(h, f.direction);
      if (s < f.bias) {
        const double c = 2.0 * (s - f.bias);
        for (std::size_t i = 0; i < h.size(); ++i) {
          h[i] = static_cast<float>(h[i] - c * f.direction[i]);
        }
      }
      return;
    }
  }
}

std::vector<float> apply(const SteeringFunction& f, std::span<const float> h) {
  std::vector<float> out(h.begin(), h.end());
  apply_inplace(f, out);
  return out;
}

std::vector<float> reflect(std::span<const float> u, float b, std::span<const float> h) {
  if (u.size() != h.size()) throw Error(ErrorKind::kSteeringShape, "reflect: width mismatch");
  const double c = 2.0 * (dot(h, u) - b);
  std::vector<float> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = static_cast<float>(h[i] - c * u[i]);
  return out;
}

double hyperplane_distance(std::span<const float> u, float b, std::span<const float> h) {
  if (u.size() != h.size()) throw Error(ErrorKind::kSteeringShape, "distance: width mismatch");
  return dot(h, u) - b;
}

SteeringPolicy SteeringPolicy::identity(std::uint32_t n_layers, std::uint32_t d_model) {
  SteeringPolicy p;
  p.layers.resize(n_layers);
  p.d_model = d_model;
  return p;
}

const SteeringFunction& SteeringPolicy::at(SlotKey key) const {
  if (key.layer >= layers.size()) throw Error(ErrorKind::kSteeringShape, "layer out of range");
  return key.site == Site::kPreAttn ? layers[key.layer].pre_attn : layers[key.layer].pre_ffn;
}

SteeringFunction& SteeringPolicy::at(SlotKey key) {
  if (key.layer >= layers.size()) throw Error(ErrorKind::kSteeringShape, "layer out of range");
  return key.site == Site::kPreAttn ? layers[key.layer].pre_attn : layers[key.layer].pre_ffn;
}

bool SteeringPolicy::is_identity() const noexcept {
  for (const auto& l : layers) {
    if (!l.pre_attn.is_identity() || !l.pre_ffn.is_identity()) return false;
  }
  return true;
}

SteeringPolicy compose_policy(const ModelConfig& config, const SteeringMap& fns,
                              std::uint32_t generation, std::string learner,
                              std::uint64_t config_hash, bool steer_skip) {
  SteeringPolicy p = SteeringPolicy::identity(config.n_layers, config.d_model);
  p.generation = generation;
  p.learner = std::move(learner);
  p.config_hash = config_hash;
  p.steer_skip = steer_skip;
  for (const auto& [key, f] : fns) {
    if (key.layer >= config.n_layers) {
      throw Error(ErrorKind::kSteeringShape, "slot layer " + std::to_string(key.layer) +
                                                 " outside a " + std::to_string(config.n_layers) +
                                                 "-layer model");
    }
    check_dim(f, config.d_model);
    p.at(key) = f;
  }
  return p;
}

SteeringPolicy refine_policy(const SteeringPolicy& previous, const SteeringMap& fns,
                             std::uint32_t generation) {
  SteeringPolicy p = previous;
  p.generation = generation;
  for (const auto& [key, f] : fns) {
    check_dim(f, p.d_model);
    SteeringFunction& slot = p.at(key);
    if (slot.kind == SteeringKind::kAdditive && f.kind == SteeringKind::kAdditive) {
      std::vector<double> sum(p.d_model);
      double sq = 0.0;
      for (std::size_t i = 0; i < sum.size(); ++i) {
        sum[i] = static_cast<double>(slot.strength) * slot.direction[i] +
                 static_cast<double>(f.strength) * f.direction[i];
        sq += sum[i] * sum[i];
      }
      const double norm = std::sqrt(sq);
      slot = norm < kDegenerateNorm
                 ? SteeringFunction::identity()
                 : SteeringFunction::additive(unit_from(sum, norm), static_cast<float>(norm));
    } else if (!f.is_identity()) {
      slot = f;
    }
  }
  return p;
}

SteeringMap restrict_layers(SteeringMap fns, const std::vector<std::uint32_t>& layers) {
  if (layers.empty()) return fns;
  std::erase_if(fns, [&](const auto& kv) {
    return std::find(layers.begin(), layers.end(), kv.first.layer) == layers.end();
  });
  return fns;
}

SteeringMap learn_mean_diff(const ActivationSet& positive, const ActivationSet& negative,
                            float strength) {
  return for_each_slot(positive, negative, 1, [&](const SlotStats& s) {
    if (s.norm < kDegenerateNorm) return SteeringFunction::identity();
    return SteeringFunction::additive(unit_from(s.diff, s.norm), strength);
  });
}

SteeringMap learn_householder(const ActivationSet& positive, const ActivationSet& negative) {
  return for_each_slot(positive, negative, 2, [&](const SlotStats& s) {
    if (s.norm < kDegenerateNorm) return SteeringFunction::identity();
    std::vector<float> u = unit_from(s.diff, s.norm);
    double proj_pos = 0.0, proj_neg = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      proj_pos += s.mean_pos[i] * u[i];
      proj_neg += s.mean_neg[i] * u[i];
    }
    return SteeringFunction::householder(std::move(u), static_cast<float>(0.5 * (proj_pos + proj_neg)));
  });
}

std::unique_ptr<SteeringLearner> make_learner(LearnerKind kind, float strength) {
  if (kind == LearnerKind::kMeanDiff) return std::make_unique<MeanDiffLearner>(strength);
  return std::make_unique<HouseholderLearner>();
}

// Layout (little-endian):
//   "SIMSSF01" u8 version
//   u32 n_layers  u32 d_model  u32 generation  u8 flags(bit0 = steer_skip)
//   u64 config_hash  u32 len + learner name
//   per layer, per site (pre-attn then pre-ffn):
//     u8 site  u8 kind  [additive: f32 strength, f32[d] direction]
//                       [householder: f32 bias, f32[d] normal]
//   u32 crc32 of everything above
Bytes save_policy(const SteeringPolicy& policy) {
  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kPolicyMagic.data()), kPolicyMagic.size()});
  w.put_u8(kPolicyFormatVersion);
  w.put_u32(policy.num_layers());
  w.put_u32(policy.d_model);
  w.put_u32(policy.generation);
  w.put_u8(policy.steer_skip ? 1 : 0);
  w.put_u64(policy.config_hash);
  w.put_string(policy.learner);
  for (std::uint32_t l = 0; l < policy.num_layers(); ++l) {
    for (Site site : {Site::kPreAttn, Site::kPreFfn}) {
      const SteeringFunction& f = policy.at({l, site});
      w.put_u8(static_cast<std::uint8_t>(site));
      w.put_u8(static_cast<std::uint8_t>(f.kind));
      if (f.kind == SteeringKind::kAdditive) {
        w.put_f32(f.strength);
        w.put_f32_array(f.direction);
      } else if (f.kind == SteeringKind::kHouseholder) {
        w.put_f32(f.bias);
        w.put_f32_array(f.direction);
      }
    }
  }
  w.put_crc();
  return std::move(w).take();
}

SteeringPolicy load_policy(std::span<const std::uint8_t> data) {
  ByteReader r = open_artifact(data, kPolicyMagic, kPolicyFormatVersion);
  SteeringPolicy p;
  const std::uint32_t n_layers = r.get_u32();
  p.d_model = r.get_u32();
  p.generation = r.get_u32();
  const std::uint8_t flags = r.get_u8();
  if (flags > 1) throw Error(ErrorKind::kArtifactFormat, "unknown policy flags");
  p.steer_skip = (flags & 1) != 0;
  p.config_hash = r.get_u64();
  p.learner = r.get_string();
  if (n_layers > (1u << 16) || p.d_model > (1u << 20)) {
    throw Error(ErrorKind::kArtifactFormat, "implausible policy dimensions");
  }
  p.layers.resize(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    for (Site site : {Site::kPreAttn, Site::kPreFfn}) {
      if (r.get_u8() != static_cast<std::uint8_t>(site)) {
        throw Error(ErrorKind::kArtifactFormat, "unexpected site tag");
      }
      const std::uint8_t kind = r.get_u8();
      SteeringFunction& f = p.at({l, site});
      if (kind == static_cast<std::uint8_t>(SteeringKind::kIdentity)) continue;
      if (kind > static_cast<std::uint8_t>(SteeringKind::kHouseholder)) {
        throw Error(ErrorKind::kArtifactFormat, "unknown steering kind");
      }
      f.kind = static_cast<SteeringKind>(kind);
      const float scalar = r.get_f32();
      (f.kind == SteeringKind::kAdditive ? f.strength : f.bias) = scalar;
      f.direction.resize(p.d_model);
      r.get_f32_array(f.direction);
    }
  }
  if (r.remaining() != 0) throw Error(ErrorKind::kArtifactFormat, "trailing bytes after policy");
  return p;
}

}  // namespace sims
