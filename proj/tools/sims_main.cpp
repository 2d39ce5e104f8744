// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0
//
// sims: command line front end (init-model, pretrain, run, eval, inspect,
// report). Every file it writes lands under the output root, which is
// SIMS_OUT_DIR when set and [output] dir otherwise.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sims/binary_io.hpp"
#include "sims/config.hpp"
#include "sims/harness.hpp"
#include "sims/report.hpp"
#include "sims/simloop.hpp"
#include "sims/steering.hpp"
#include "sims/tinylm.hpp"
#include "sims/train.hpp"

namespace fs = std::filesystem;
using namespace sims;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

// `run` validates itself after applying its shorthand flags.
ExperimentConfig resolve_config(const Common& c, bool validate = true) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (validate) cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "override, e.g. --set loop.T=5");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string magic_of(const Bytes& data) {
  return data.size() >= 8 ? std::string(data.begin(), data.begin() + 8) : std::string();
}

void print_policy(const SteeringPolicy& p) {
  std::printf("policy generation=%u layers=%u d_model=%u learner=%s steer_skip=%d config_hash=%016llx\n",
              p.generation, p.num_layers(), p.d_model, p.learner.c_str(), p.steer_skip ? 1 : 0,
              static_cast<unsigned long long>(p.config_hash));
  for (std::uint32_t l = 0; l < p.num_layers(); ++l) {
    for (Site site : {Site::kPreAttn, Site::kPreFfn}) {
      const SteeringFunction& f = p.at({l, site});
      std::printf("  layer %u %-8s %-11s", l, std::string(to_string(site)).c_str(),
                  std::string(to_string(f.kind)).c_str());
      if (f.kind == SteeringKind::kAdditive) std::printf(" strength=%.6g", f.strength);
      if (f.kind == SteeringKind::kHouseholder) std::printf(" bias=%.6g", f.bias);
      std::printf("\n");
    }
  }
}

void print_bank(const MemoryBank& bank, std::size_t top) {
  std::printf("bank capacity=%zu size=%zu next_sequence=%llu\n", bank.capacity, bank.entries.size(),
              static_cast<unsigned long long>(bank.next_sequence));
  const TopN best = bank_top_n(bank, std::min(top, bank.entries.size()));
  for (const auto& e : best.entries) {
    const auto ord = e.order();
    std::printf("  r=%+.6f t=%u seq=%llu prompt=\"%s\"\n", e.reward, e.iteration,
                static_cast<unsigned long long>(e.sequence), decode({e.prompt.begin() + 1, e.prompt.end()}).c_str());
    std::printf("      best  (win %.3f) \"%s\"\n", e.win[ord.front()], decode(e.responses[ord.front()]).c_str());
    std::printf("      worst (win %.3f) \"%s\"\n", e.win[ord.back()], decode(e.responses[ord.back()]).c_str());
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Self-improving model steering on a toy transformer"};
  app.require_subcommand(1);

  Common c_init, c_pre, c_run, c_eval;
  std::string init_out = "model_init.ckpt";
  auto* init = app.add_subcommand("init-model", "write a freshly initialised model checkpoint");
  add_common(init, c_init);
  init->add_option("--out", init_out, "checkpoint name under the output root");

  std::string pre_in, pre_out = "model.ckpt";
  auto* pre = app.add_subcommand("pretrain", "pretrain on the synthetic corpus");
  add_common(pre, c_pre);
  pre->add_option("--model", pre_in, "starting checkpoint (default: fresh init)")->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "checkpoint name under the output root");

  std::string run_model, run_name;
  std::optional<std::string> run_variant, run_strategy;
  std::optional<std::uint32_t> run_t, run_n, run_k;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "run a steering loop and evaluate every iteration");
  add_common(run, c_run);
  run->add_option("--model", run_model, "pretrained checkpoint (default: pretrain from config)")
      ->check(CLI::ExistingFile);
  run->add_option("--variant", run_variant, "sims | sims-pr | sims-cs");
  run->add_option("--strategy", run_strategy, "oracle | random | best-of-n");
  run->add_option("--T", run_t, "iterations");
  run->add_option("--N", run_n, "prompts per iteration");
  run->add_option("--K", run_k, "responses per prompt");
  run->add_option("--seed", run_seed, "master seed");
  run->add_option("--name", run_name, "run directory name under the output root");

  std::string eval_model, eval_a, eval_b, eval_out = "eval_report.json";
  auto* ev = app.add_subcommand("eval", "win rate of policy a against policy b on the eval prompts");
  add_common(ev, c_eval);
  ev->add_option("--model", eval_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--a", eval_a, "policy a (.sf)")->required()->check(CLI::ExistingFile);
  ev->add_option("--b", eval_b, "policy b (.sf); identity if omitted")->check(CLI::ExistingFile);
  ev->add_option("--out", eval_out, "report name under the output root");

  std::string inspect_path;
  std::size_t inspect_top = 5;
  auto* ins = app.add_subcommand("inspect", "print a checkpoint, policy, bank or trace file");
  ins->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);
  ins->add_option("--top", inspect_top, "bank entries to show");

  std::vector<std::string> report_files;
  std::string report_format = "tsv", report_out;
  Common c_rep;
  auto* rep = app.add_subcommand("report", "aggregate trace.jsonl files into per-iteration means");
  add_common(rep, c_rep);
  rep->add_option("traces", report_files)->required()->check(CLI::ExistingFile);
  rep->add_option("--format", report_format)->check(CLI::IsMember({"tsv", "jsonl"}));
  rep->add_option("--out", report_out, "also write the table under the output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  if (*init) {
    const ExperimentConfig cfg = resolve_config(c_init);
    const fs::path out = contained_path(output_root(cfg), init_out);
    fs::create_directories(out.parent_path());
    const TinyTransformer m = init_model(cfg.model);
    write_file(out, save_model(m));
    std::printf("wrote %s (%zu parameters, checksum %08x)\n", out.c_str(), m.num_parameters(), weights_checksum(m));
  } else if (*pre) {
    const ExperimentConfig cfg = resolve_config(c_pre);
    const fs::path out = contained_path(output_root(cfg), pre_out);
    TrainReport report;
    TinyTransformer m;
    if (pre_in.empty()) {
      m = build_pretrained_model(cfg, &report);
    } else {
      const auto corpus = make_pretraining_corpus(cfg.prompts, cfg.corpus, cfg.data_seed);
      m = pretrain_on_corpus(load_model(read_file(pre_in)), corpus, cfg.pretrain, &report);
    }
    fs::create_directories(out.parent_path());
    write_file(out, save_model(m));
    std::printf("heldout loss %.4f -> %.4f after %u steps; wrote %s\n", report.initial_heldout_loss,
                report.final_heldout_loss, report.steps, out.c_str());
  } else if (*run) {
    ExperimentConfig cfg = resolve_config(c_run, false);
    if (run_variant) cfg.loop.variant = parse_variant(*run_variant);
    if (run_strategy) cfg.strategy = parse_strategy(*run_strategy);
    if (run_t) cfg.loop.iterations = *run_t;
    if (run_n) cfg.loop.prompts_per_iter = *run_n;
    if (run_k) cfg.loop.responses_per_prompt = *run_k;
    if (run_seed) cfg.loop.master_seed = *run_seed;
    if (cfg.loop.variant == Variant::kSimsCs && cfg.loop.bank_capacity < cfg.loop.prompts_per_iter) {
      cfg.loop.bank_capacity = 4 * cfg.loop.prompts_per_iter;
    }
    if (cfg.prompts.train_count < cfg.loop.prompts_per_iter) cfg.prompts.train_count = cfg.loop.prompts_per_iter;
    cfg.validate();
    if (run_name.empty()) {
      const std::string label = cfg.strategy == Strategy::kOracle ? std::string(to_string(cfg.loop.variant))
                                                                  : std::string(to_string(cfg.strategy));
      run_name = "run_" + label + "_seed" + std::to_string(cfg.loop.master_seed);
    }
    const fs::path dir = contained_path(output_root(cfg), run_name);
    fs::create_directories(dir);
    TinyTransformer model;
    if (run_model.empty()) {
      TrainReport tr;
      model = build_pretrained_model(cfg, &tr);
      std::printf("pretrained: heldout loss %.4f -> %.4f\n", tr.initial_heldout_loss, tr.final_heldout_loss);
    } else {
      model = load_model(read_file(run_model));
    }
    write_file(dir / "model.ckpt", save_model(model));
    const RunSummary s = run_experiment(cfg, model, dir);
    for (const auto& tr : s.result.traces) std::printf("%s\n", tr.to_json().c_str());
    for (std::size_t t = 0; t < s.report.win_rate.size(); ++t) {
      std::printf("t=%zu win_rate_vs_pi0=%.4f mean_oracle_score=%.4f\n", t, s.report.win_rate[t],
                  s.report.mean_score[t]);
    }
    std::printf("run directory: %s\n", dir.c_str());
  } else if (*ev) {
    const ExperimentConfig cfg = resolve_config(c_eval);
    const TinyTransformer model = load_model(read_file(eval_model));
    const SteeringPolicy a = load_policy(read_file(eval_a));
    const SteeringPolicy b = eval_b.empty() ? SteeringPolicy::identity(model.config.n_layers, model.config.d_model)
                                            : load_policy(read_file(eval_b));
    const PreferenceOracle oracle(cfg.oracle, &model);
    const PromptSets prompts = make_prompt_source(cfg.prompts, cfg.data_seed);
    const SteeringPolicy pair[] = {b, a};
    EvalReport r = evaluate_policies(model, pair, prompts.eval, oracle, cfg.eval, loop_sampling(cfg.loop));
    r.master_seed = cfg.loop.master_seed;
    r.config_hash = config_hash(cfg);
    std::printf("win_rate(a over b) = %.6f  mean_score a=%.6f b=%.6f  (%zu prompts x %u samples)\n",
                r.win_rate[1], r.mean_score[1], r.mean_score[0], r.prompts, r.samples);
    const fs::path out = contained_path(output_root(cfg), eval_out);
    write_text(out, r.to_json());
  } else if (*ins) {
    const Bytes data = read_file(inspect_path);
    const std::string magic = magic_of(data);
    if (magic == kPolicyMagic) {
      print_policy(load_policy(data));
    } else if (magic == kBankMagic) {
      print_bank(load_bank(data), inspect_top);
    } else if (magic == kModelMagic) {
      const TinyTransformer m = load_model(data);
      std::printf("model layers=%u d_model=%u heads=%u d_ff=%u vocab=%u max_seq_len=%u params=%zu checksum=%08x\n",
                  m.config.n_layers, m.config.d_model, m.config.n_heads, m.config.d_ff, m.config.vocab_size,
                  m.config.max_seq_len, m.num_parameters(), weights_checksum(m));
    } else {
      for (const auto& tr : read_traces(inspect_path)) std::printf("%s\n", tr.to_json().c_str());
    }
  } else if (*rep) {
    std::vector<std::vector<IterationTrace>> runs;
    for (const auto& f : report_files) runs.push_back(read_traces(f));
    const auto rows = aggregate_traces(runs);
    const std::string text = report_format == "tsv" ? format_report_tsv(rows) : format_report_jsonl(rows);
    std::fputs(text.c_str(), stdout);
    if (!report_out.empty()) write_text(contained_path(output_root(resolve_config(c_rep)), report_out), text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "sims: %s\n", e.what());
    return static_cast<int>(exit_code_for(e.kind()));
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "sims: io: %s\n", e.what());
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sims: %s\n", e.what());
    return static_cast<int>(ExitCode::kRuntime);
  }
}
