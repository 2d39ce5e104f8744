// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/capture.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sims/error.hpp"

namespace sims {

std::string_view to_string(Aggregation a) noexcept {
  return a == Aggregation::kMeanResponse ? "mean_response" : "last_token";
}

const std::vector<std::vector<float>>& ActivationSet::at(SlotKey key) const {
  auto it = slots.find(key);
  if (it == slots.end()) {
    throw Error(ErrorKind::kInsufficientData, "activation set has no slot (layer " +
                                                  std::to_string(key.layer) + ", " +
                                                  std::string(to_string(key.site)) + ")");
  }
  return it->second;
}

ActivationSet collect_activations(const TinyTransformer& model, const SteeringPolicy& policy,
                                  std::span<const PromptResponse> pairs,
                                  const CaptureOptions& options) {
  if (pairs.empty()) throw Error(ErrorKind::kInsufficientData, "no (prompt, response) pairs");
  const auto& c = model.config;
  ActivationSet out;
  out.aggregation = options.aggregation;
  out.source_count = pairs.size();
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    for (Site s : {Site::kPreAttn, Site::kPreFfn}) out.slots[{l, s}].reserve(pairs.size());
  }
  const SteeringPolicy bare = SteeringPolicy::identity(c.n_layers, c.d_model);
  const SteeringPolicy& active = options.use_bare_model ? bare : policy;

  for (const PromptResponse& pr : pairs) {
    const TokenSeq joined = join_prompt_response(pr.prompt, pr.response);
    if (joined.size() > c.max_seq_len) {
      throw Error(ErrorKind::kSequenceLength, "prompt and response of " + std::to_string(joined.size()) +
                                                  " tokens exceed max_seq_len " +
                                                  std::to_string(c.max_seq_len));
    }
    const ForwardResult fr = forward_steered(model, active, joined, CaptureSites::both());
    const auto first = static_cast<Eigen::Index>(
        pr.response.empty() ? response_offset(pr.prompt) - 1 : response_offset(pr.prompt));
    const auto last = static_cast<Eigen::Index>(joined.size()) - 1;
    for (const HiddenState& hs : fr.hidden) {
      Vec v;
      if (options.aggregation == Aggregation::kLastToken) {
        v = hs.vectors.row(last).transpose();
      } else {
        v = hs.vectors.middleRows(first, last - first + 1).colwise().mean().transpose();
      }
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw Error(ErrorKind::kInsufficientData, "non-finite activation");
      }
      out.slots[{hs.layer, hs.site}].emplace_back(v.data(), v.data() + v.size());
    }
  }
  return out;
}

std::pair<ActivationSet, ActivationSet> split_pos_neg(std::span<const PromptResponse> positive,
                                                      std::span<const PromptResponse> negative,
                                                      const TinyTransformer& model,
                                                      const SteeringPolicy& policy,
                                                      const CaptureOptions& options) {
  auto side = [&](std::span<const PromptResponse> pairs, const char* name) {
    if (pairs.empty()) {
      throw Error(ErrorKind::kInsufficientData, std::string(name) + " side is empty");
    }
    try {
      return collect_activations(model, policy, pairs, options);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(name) + " side: " + e.what());
    }
  };
  ActivationSet pos = side(positive, "positive");
  ActivationSet neg = side(negative, "negative");
  return {std::move(pos), std::move(neg)};
}

void dump_activations(const ActivationSet& set, const std::filesystem::path& dir,
                      std::string_view stem) {
  std::filesystem::create_directories(dir);
  ByteWriter rows;
  std::ofstream index(dir / (std::string(stem) + ".jsonl"));
  if (!index) throw Error(ErrorKind::kIo, "cannot write activation index in " + dir.string());
  std::size_t row = 0;
  for (std::size_t i = 0; i < set.source_count; ++i) {
    for (const auto& [key, vectors] : set.slots) {
      rows.put_f32_array(vectors.at(i));
      nlohmann::ordered_json rec;
      rec["pair_index"] = i;
      rec["layer"] = key.layer;
      rec["site"] = to_string(key.site);
      rec["aggregation"] = to_string(set.aggregation);
      rec["row"] = row++;
      rec["dim"] = vectors.at(i).size();
      index << rec.dump() << '\n';
    }
  }
  write_file(dir / (std::string(stem) + ".f32"), rows.bytes());
}

}  // namespace sims
