// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sims/capture.hpp"
#include "test_util.hpp"

namespace sims {
namespace {

using testing::error_kind_of;

class CaptureTest : public ::testing::Test {
 protected:
  TinyTransformer model = testing::random_model(testing::small_config());
  SteeringPolicy id = SteeringPolicy::identity(model.config.n_layers, model.config.d_model);
  std::vector<PromptResponse> pairs = {{encode_prompt("ab"), encode("xyz")},
                                       {encode_prompt("hello"), encode("q")},
                                       {encode_prompt("c"), TokenSeq{}}};
};

TEST_F(CaptureTest, ShapesAndCounts) {
  const ActivationSet s = collect_activations(model, id, pairs);
  EXPECT_EQ(s.source_count, 3u);
  EXPECT_EQ(s.slots.size(), 2u * model.config.n_layers);
  for (const auto& [key, rows] : s.slots) {
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) EXPECT_EQ(r.size(), model.config.d_model);
  }
}

// Mean over response positions, last-token row, and the marker row for an
// empty response, each re-derived from a plain forward pass.
TEST_F(CaptureTest, AggregationMatchesForwardRows) {
  const ActivationSet mean = collect_activations(model, id, pairs);
  const ActivationSet last = collect_activations(model, id, pairs, {Aggregation::kLastToken, false});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const TokenSeq joined = join_prompt_response(pairs[i].prompt, pairs[i].response);
    const ForwardResult fr = forward(model, joined, CaptureSites::both());
    const std::size_t off = response_offset(pairs[i].prompt);
    for (const HiddenState& hs : fr.hidden) {
      const auto& m = mean.at({hs.layer, hs.site})[i];
      const auto& l = last.at({hs.layer, hs.site})[i];
      for (Eigen::Index k = 0; k < hs.vectors.cols(); ++k) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t p = off; p < joined.size(); ++p, ++n) acc += hs.vectors(static_cast<Eigen::Index>(p), k);
        const double expect = n ? acc / double(n) : hs.vectors(static_cast<Eigen::Index>(off - 1), k);
        EXPECT_NEAR(m[static_cast<std::size_t>(k)], expect, 1e-5);
        EXPECT_EQ(l[static_cast<std::size_t>(k)], hs.vectors(hs.vectors.rows() - 1, k));
      }
    }
  }
}

TEST_F(CaptureTest, PolicyVersusBareModel) {
  Rng rng(3);
  SteeringPolicy p = id;
  p.steer_skip = true;
  p.at({0, Site::kPreAttn}) = SteeringFunction::additive(testing::random_unit(rng, model.config.d_model), 4.0f);
  const ActivationSet steered = collect_activations(model, p, pairs);
  const ActivationSet bare = collect_activations(model, p, pairs, {Aggregation::kMeanResponse, true});
  EXPECT_EQ(bare, collect_activations(model, id, pairs));
  EXPECT_NE(steered, bare);
  // The first hook sees the stream before any steering is applied.
  EXPECT_EQ(steered.at({0, Site::kPreAttn}), bare.at({0, Site::kPreAttn}));
}

TEST_F(CaptureTest, Errors) {
  EXPECT_EQ(error_kind_of([&] { collect_activations(model, id, {}); }), ErrorKind::kInsufficientData);
  const std::vector<PromptResponse> too_long = {{encode_prompt(std::string(40, 'a')), encode(std::string(10, 'b'))}};
  EXPECT_EQ(error_kind_of([&] { collect_activations(model, id, too_long); }), ErrorKind::kSequenceLength);
  EXPECT_EQ(error_kind_of([&] { split_pos_neg(pairs, {}, model, id); }), ErrorKind::kInsufficientData);
  const auto [pos, neg] = split_pos_neg(pairs, std::span(pairs).first(1), model, id);
  EXPECT_EQ(pos.source_count, 3u);
  EXPECT_EQ(neg.source_count, 1u);
}

TEST_F(CaptureTest, DumpWritesRowsAndIndex) {
  const auto dir = std::filesystem::temp_directory_path() / "sims_capture_dump";
  std::filesystem::remove_all(dir);
  const ActivationSet s = collect_activations(model, id, pairs);
  dump_activations(s, dir, "pos");
  const auto bytes = std::filesystem::file_size(dir / "pos.f32");
  EXPECT_EQ(bytes, 3u * 2u * model.config.n_layers * model.config.d_model * sizeof(float));
  std::ifstream index(dir / "pos.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(index, line);) ++lines;
  EXPECT_EQ(lines, 3u * 2u * model.config.n_layers);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sims
