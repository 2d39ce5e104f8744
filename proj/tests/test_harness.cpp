// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "sims/config.hpp"
#include "sims/harness.hpp"
#include "sims/prompts.hpp"
#include "sims/report.hpp"
#include "test_util.hpp"

namespace sims {
namespace {

namespace fs = std::filesystem;
using testing::error_kind_of;

TEST(Prompts, PartitionIsDisjointAndDeterministic) {
  PromptSpec spec = PromptSpec::defaults();
  spec.train_count = 200;
  spec.eval_count = 40;
  spec.validation_count = 10;
  const PromptSets a = make_prompt_source(spec, 9);
  const PromptSets b = make_prompt_source(spec, 9);
  EXPECT_EQ(a.train.prompts, b.train.prompts);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.train.prompts.size(), 200u);
  std::set<TokenSeq> seen;
  for (const auto& p : a.train.prompts) seen.insert(p);
  for (const auto& p : a.eval) seen.insert(p);
  for (const auto& p : a.validation) seen.insert(p);
  EXPECT_EQ(seen.size(), 250u);
  EXPECT_NE(make_prompt_source(spec, 10).eval, a.eval);
  for (const auto& p : a.eval) EXPECT_EQ(p.front(), vocab::kBos);
}

TEST(Prompts, TemplateValidationAndCapacity) {
  PromptSpec spec = PromptSpec::defaults();
  EXPECT_EQ(enumerate_prompts(spec).size(), spec.templates.size() * spec.adjectives.size() * spec.nouns.size());
  spec.train_count = 2000;
  EXPECT_EQ(make_prompt_source(spec, 1).train.prompts.size(), 2000u);
  spec.train_count = 5000;
  EXPECT_EQ(error_kind_of([&] { make_prompt_source(spec, 1); }), ErrorKind::kConfig);
  spec = PromptSpec::defaults();
  spec.templates = {"what about {colour}?"};
  EXPECT_EQ(error_kind_of([&] { spec.validate(); }), ErrorKind::kConfig);
}

TEST(Corpus, SequencesAreWellFormed) {
  CorpusSpec c;
  c.count = 200;
  const auto corpus = make_pretraining_corpus(PromptSpec::defaults(), c, 5);
  ASSERT_EQ(corpus.size(), 200u);
  std::size_t bangs = 0;
  for (const auto& seq : corpus) {
    EXPECT_EQ(seq.front(), vocab::kBos);
    EXPECT_EQ(seq.back(), vocab::kEos);
    EXPECT_EQ(std::count(seq.begin(), seq.end(), vocab::kBos), 2);
    bangs += std::count(seq.begin(), seq.end(), Token{'!'});
  }
  EXPECT_GT(bangs, 0u);
  EXPECT_EQ(corpus, make_pretraining_corpus(PromptSpec::defaults(), c, 5));
}

// Emits the oracle's target token as the whole response.
struct BangSampler {
  std::vector<TokenSeq> operator()(const TokenSeq&, std::uint32_t n, std::uint64_t) const {
    return std::vector<TokenSeq>(n, encode("!!!"));
  }
};

class HarnessTest : public ::testing::Test {
 protected:
  TinyTransformer model_ = testing::random_model(testing::small_config(), 3.0f);
  SteeringPolicy id_ = SteeringPolicy::identity(2, 16);
  PreferenceOracle oracle_{OracleSpec{}};
  std::vector<TokenSeq> prompts_ = {encode_prompt("a"), encode_prompt("bb"), encode_prompt("ccc")};
  SamplingOptions sampling_{1, 8, 1.0f};
};

TEST_F(HarnessTest, IdenticalPoliciesScoreExactlyHalf) {
  EXPECT_EQ(eval_winrate(model_, id_, id_, prompts_, oracle_, 5, 3, sampling_), 0.5);
}

TEST_F(HarnessTest, TargetEmittingStubAlwaysWins) {
  const PolicySampler base{&model_, &id_, sampling_};
  EXPECT_EQ(eval_winrate_samplers(oracle_, BangSampler{}, base, prompts_, 4, 1), 1.0);
  EXPECT_EQ(eval_winrate_samplers(oracle_, base, BangSampler{}, prompts_, 4, 1), 0.0);
}

TEST_F(HarnessTest, EmptyEvalSetIsRejected) {
  const std::vector<TokenSeq> none;
  EXPECT_EQ(error_kind_of([&] { eval_winrate(model_, id_, id_, none, oracle_, 2, 1, sampling_); }),
            ErrorKind::kInsufficientData);
}

TEST_F(HarnessTest, EvalReportIsReproducible) {
  const std::vector<SteeringPolicy> ps = {id_, id_};
  const EvalSpec eval{3, 11};
  const EvalReport a = evaluate_policies(model_, ps, prompts_, oracle_, eval, sampling_);
  const EvalReport b = evaluate_policies(model_, ps, prompts_, oracle_, eval, sampling_);
  EXPECT_EQ(a.to_json(), b.to_json());
  ASSERT_EQ(a.win_rate.size(), 2u);
  EXPECT_EQ(a.win_rate[0], 0.5);
  EXPECT_EQ(a.win_rate[1], 0.5);
}

class BaselineTest : public ::testing::Test {
 protected:
  static LoopConfig config() {
    LoopConfig c;
    c.iterations = 2;
    c.prompts_per_iter = 6;
    c.responses_per_prompt = 3;
    c.max_new_tokens = 8;
    c.master_seed = 4;
    return c;
  }
  TinyTransformer model_ = testing::random_model(testing::small_config(), 3.0f);
  PreferenceOracle oracle_{OracleSpec{}};
  PromptSets sets_ = [] {
    PromptSpec s = PromptSpec::defaults();
    s.train_count = 40;
    s.eval_count = 4;
    s.validation_count = 3;
    return make_prompt_source(s, 2);
  }();
  EvalSpec eval_{2, 5};
};

TEST_F(BaselineTest, RandomLabelsAreReproducible) {
  const auto a = run_baseline_strategy(Strategy::kRandom, model_, oracle_, sets_.train, config(), sets_.validation,
                                       1, eval_);
  const auto b = run_baseline_strategy(Strategy::kRandom, model_, oracle_, sets_.train, config(), sets_.validation,
                                       1, eval_);
  ASSERT_EQ(a.policies.size(), 3u);
  for (std::size_t t = 0; t < a.policies.size(); ++t) {
    EXPECT_EQ(save_policy(a.policies[t]), save_policy(b.policies[t]));
  }
  for (const auto& sets : a.preference_sets) {
    for (std::size_t i = 0; i < sets.positive.size(); ++i) {
      EXPECT_NE(sets.positive[i].response, sets.negative[i].response);
    }
  }
}

TEST_F(BaselineTest, BestOfOneEqualsRandom) {
  const auto r = run_baseline_strategy(Strategy::kRandom, model_, oracle_, sets_.train, config(), sets_.validation,
                                       1, eval_);
  const auto b = run_baseline_strategy(Strategy::kBestOfN, model_, oracle_, sets_.train, config(), sets_.validation,
                                       1, eval_);
  for (std::size_t t = 0; t < r.policies.size(); ++t) {
    EXPECT_EQ(save_policy(r.policies[t]), save_policy(b.policies[t]));
  }
}

TEST(Config, IniRoundTripAndOverrides) {
  ExperimentConfig c;
  c.loop.iterations = 5;
  c.loop.variant = Variant::kSimsCs;
  c.loop.steer_layers = {0, 2};
  c.oracle.flip_probability = 0.1;
  c.prompts.templates = {"say {adj} {noun}", "hi {noun}"};
  const ExperimentConfig back = parse_config(to_ini(c));
  EXPECT_EQ(to_ini(back), to_ini(c));
  EXPECT_EQ(config_hash(back), config_hash(c));

  apply_override(c, "loop.T=7");
  EXPECT_EQ(c.loop.iterations, 7u);
  EXPECT_NE(config_hash(c), config_hash(back));
  apply_override(c, "oracle.kind=noisy");
  EXPECT_EQ(c.oracle.kind, OracleKind::kNoisyWrapper);
  EXPECT_EQ(error_kind_of([&] { apply_override(c, "loop.bogus=1"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([&] { apply_override(c, "loop.T"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([&] { apply_override(c, "loop.T=abc"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([&] { apply_override(c, "loop.variant=ppo"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([] { parse_config("[loop]\nunknown = 3\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(parse_config("[loop]\nT = 9\n").loop.iterations, 9u);
}

IterationTrace trace(std::uint32_t t, std::size_t dp, double score) {
  IterationTrace tr;
  tr.t = t;
  tr.variant = "sims";
  tr.d_plus = dp;
  tr.d_minus = dp;
  tr.mean_oracle_score = score;
  return tr;
}

TEST(Report, AggregationMatchesHandMeans) {
  const std::vector<std::vector<IterationTrace>> runs = {
      {trace(1, 10, 0.2), trace(2, 6, 0.4)},
      {trace(1, 20, 0.4), trace(2, 8, 0.6)},
      {trace(1, 30, 0.3)},
  };
  const auto rows = aggregate_traces(runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].runs, 3u);
  EXPECT_DOUBLE_EQ(rows[0].d_plus, 20.0);
  EXPECT_NEAR(rows[0].mean_oracle_score, 0.3, 1e-12);
  EXPECT_EQ(rows[1].runs, 2u);
  EXPECT_DOUBLE_EQ(rows[1].d_minus, 7.0);
  EXPECT_NEAR(rows[1].mean_oracle_score, 0.5, 1e-12);
  const std::string tsv = format_report_tsv(rows);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 3);
}

TEST(Report, TraceParsing) {
  const IterationTrace tr = trace(3, 4, 0.25);
  const IterationTrace back = parse_trace_line(tr.to_json());
  EXPECT_EQ(back.t, 3u);
  EXPECT_EQ(back.d_plus, 4u);
  EXPECT_EQ(back.mean_oracle_score, 0.25);
  EXPECT_EQ(error_kind_of([] { parse_trace_line("{\"schema\": 2}"); }), ErrorKind::kUnsupportedVersion);
  EXPECT_EQ(error_kind_of([] { parse_trace_line("{not json"); }), ErrorKind::kProtocol);

  const fs::path p = fs::temp_directory_path() / "sims_trace_order.jsonl";
  std::ofstream(p) << trace(2, 1, 0).to_json() << "\n" << trace(1, 1, 0).to_json() << "\n";
  EXPECT_EQ(error_kind_of([&] { read_traces(p); }), ErrorKind::kProtocol);
  fs::remove(p);
}

TEST(Paths, ContainedPathRejectsEscapes) {
  const fs::path root = "/tmp/out";
  EXPECT_EQ(contained_path(root, "run1"), fs::path("/tmp/out/run1"));
  EXPECT_EQ(error_kind_of([&] { contained_path(root, "../x"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([&] { contained_path(root, "/etc"); }), ErrorKind::kConfig);
  EXPECT_EQ(policy_file_name(3), "policy_0003.sf");
  EXPECT_EQ(bank_file_name(12), "bank_0012.bin");
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sims_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int sims(const std::string& args) {
    const std::string cmd = "SIMS_OUT_DIR='" + dir_.string() + "' '" SIMS_CLI_PATH "' " + args + " > '" +
                            (dir_ / "stdout.txt").string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const {
    std::ifstream in(dir_ / "stdout.txt");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(sims("--no-such-flag"), 2);
  EXPECT_EQ(sims("run --set loop.bogus=1"), 3);
  EXPECT_EQ(sims("run --set loop.T=0"), 3);
  std::ofstream(dir_ / "junk.sf") << "SIMSSF01 but truncated";
  EXPECT_EQ(sims("inspect '" + (dir_ / "junk.sf").string() + "'"), 4);
}

TEST_F(CliTest, TinyRunWritesArtifacts) {
  const std::string small =
      "--set model.n_layers=1 --set model.d_model=16 --set model.n_heads=2 --set model.d_ff=32 "
      "--set pretrain.steps=5 --set pretrain.corpus_size=50 --set data.train_prompts=16 "
      "--set data.eval_prompts=4 --set eval.samples=1 --set loop.max_new_tokens=6 "
      "--set loop.selection=best-worst --set loop.M_samples=2 ";
  ASSERT_EQ(sims("run " + small + "--T 2 --N 4 --K 2 --seed 3 --name r1"), 0) << out();
  const fs::path run = dir_ / "r1";
  for (const char* f : {"config.ini", "policy_0000.sf", "policy_0002.sf", "trace.jsonl", "eval.json", "model.ckpt"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  EXPECT_EQ(read_traces(run / "trace.jsonl").size(), 2u);
  EXPECT_EQ(sims("inspect '" + (run / "policy_0002.sf").string() + "'"), 0) << out();
  EXPECT_NE(out().find("generation"), std::string::npos) << out();
  EXPECT_EQ(sims("report '" + (run / "trace.jsonl").string() + "' --format tsv"), 0) << out();
  EXPECT_EQ(sims("eval --model '" + (run / "model.ckpt").string() + "' --a '" + (run / "policy_0002.sf").string() +
                 "' --set loop.N=4 --set data.train_prompts=16 --set data.eval_prompts=4 --set eval.samples=1"),
            0)
      << out();
  EXPECT_NE(out().find("win_rate"), std::string::npos);
}

}  // namespace
}  // namespace sims
