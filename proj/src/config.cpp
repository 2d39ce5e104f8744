// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sims/binary_io.hpp"
#include "sims/rng.hpp"

namespace sims {
namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::kConfig, "bad value '" + text + "' for " + key);
  }
  return value;
}

// from_chars for floating point is missing in older libstdc++ builds.
double parse_real(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  double v = 0.0;
  if (!(in >> v) || !in.eof()) throw Error(ErrorKind::kConfig, "bad value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::kConfig, "bad boolean '" + text + "' for " + key);
}

std::string real_text(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  return out.str();
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = text.find(sep, start);
    out.push_back(text.substr(start, at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return out;
}

struct Binding {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SIMS_UINT(KEY, EXPR)                                                              \
  Binding {                                                                               \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.EXPR); },                \
        [](ExperimentConfig& c, const std::string& v) {                                   \
          c.EXPR = parse_number<std::remove_reference_t<decltype(c.EXPR)>>(KEY, v);       \
        }                                                                                 \
  }
#define SIMS_REAL(KEY, EXPR)                                                                    \
  Binding {                                                                                     \
    KEY, [](const ExperimentConfig& c) { return real_text(c.EXPR); },                           \
        [](ExperimentConfig& c, const std::string& v) {                                         \
          c.EXPR = static_cast<std::remove_reference_t<decltype(c.EXPR)>>(parse_real(KEY, v));  \
        }                                                                                       \
  }
#define SIMS_BOOL(KEY, EXPR)                                                                           \
  Binding {                                                                                            \
    KEY, [](const ExperimentConfig& c) { return std::string(c.EXPR ? "true" : "false"); },             \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = parse_bool(KEY, v); }                 \
  }
#define SIMS_ENUM(KEY, EXPR, PARSE)                                                                    \
  Binding {                                                                                            \
    KEY, [](const ExperimentConfig& c) { return std::string(to_string(c.EXPR)); },                     \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = PARSE(v); }                           \
  }
#define SIMS_LIST(KEY, EXPR)                                                                           \
  Binding {                                                                                            \
    KEY, [](const ExperimentConfig& c) { return join(c.EXPR, '|'); },                                  \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = split(v, '|'); }                      \
  }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "mean_response" || name == "mean-response") return Aggregation::kMeanResponse;
  if (name == "last_token" || name == "last-token") return Aggregation::kLastToken;
  throw Error(ErrorKind::kConfig, "unknown aggregation '" + std::string(name) + "'");
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      SIMS_UINT("model.n_layers", model.n_layers),
      SIMS_UINT("model.d_model", model.d_model),
      SIMS_UINT("model.n_heads", model.n_heads),
      SIMS_UINT("model.d_ff", model.d_ff),
      SIMS_UINT("model.vocab_size", model.vocab_size),
      SIMS_UINT("model.max_seq_len", model.max_seq_len),
      SIMS_UINT("model.seed", model.rng_seed),

      SIMS_UINT("pretrain.steps", pretrain.steps),
      SIMS_REAL("pretrain.learning_rate", pretrain.learning_rate),
      SIMS_UINT("pretrain.batch_size", pretrain.batch_size),
      SIMS_REAL("pretrain.holdout_fraction", pretrain.holdout_fraction),
      SIMS_REAL("pretrain.grad_clip", pretrain.grad_clip),
      SIMS_UINT("pretrain.seed", pretrain.seed),
      SIMS_UINT("pretrain.corpus_size", corpus.count),
      SIMS_UINT("pretrain.max_response_bytes", corpus.max_response_bytes),

      SIMS_UINT("data.seed", data_seed),
      SIMS_LIST("data.templates", prompts.templates),
      SIMS_LIST("data.adjectives", prompts.adjectives),
      SIMS_LIST("data.nouns", prompts.nouns),
      SIMS_UINT("data.train_prompts", prompts.train_count),
      SIMS_UINT("data.eval_prompts", prompts.eval_count),
      SIMS_UINT("data.validation_prompts", prompts.validation_count),

      SIMS_UINT("loop.T", loop.iterations),
      SIMS_UINT("loop.N", loop.prompts_per_iter),
      SIMS_UINT("loop.K", loop.responses_per_prompt),
      SIMS_UINT("loop.M_samples", loop.win_prob_samples),
      SIMS_ENUM("loop.learner", loop.learner, parse_learner_kind),
      SIMS_ENUM("loop.variant", loop.variant, parse_variant),
      SIMS_UINT("loop.bank_capacity", loop.bank_capacity),
      SIMS_UINT("loop.seed", loop.master_seed),
      SIMS_REAL("loop.strength", loop.strength),
      SIMS_ENUM("loop.selection", loop.selection, parse_selection_mode),
      SIMS_ENUM("loop.contrast", loop.contrast, parse_contrast_mode),
      SIMS_ENUM("loop.update", loop.update, parse_policy_update),
      SIMS_ENUM("loop.aggregation", loop.aggregation, parse_aggregation),
      SIMS_BOOL("loop.capture_bare", loop.capture_bare),
      SIMS_BOOL("loop.steer_skip", loop.steer_skip),
      Binding{"loop.steer_layers",
              [](const ExperimentConfig& c) {
                std::vector<std::string> parts;
                for (auto l : c.loop.steer_layers) parts.push_back(std::to_string(l));
                return join(parts, ',');
              },
              [](ExperimentConfig& c, const std::string& v) {
                c.loop.steer_layers.clear();
                for (const auto& p : split(v, ',')) {
                  c.loop.steer_layers.push_back(parse_number<std::uint32_t>("loop.steer_layers", p));
                }
              }},
      SIMS_UINT("loop.max_new_tokens", loop.max_new_tokens),
      SIMS_REAL("loop.temperature", loop.temperature),
      SIMS_ENUM("loop.strategy", strategy, parse_strategy),
      SIMS_UINT("loop.best_of_n_candidates", best_of_n_candidates),

      SIMS_ENUM("oracle.kind", oracle.kind, parse_oracle_kind),
      Binding{"oracle.target_token",
              [](const ExperimentConfig& c) { return std::to_string(c.oracle.target_token); },
              [](ExperimentConfig& c, const std::string& v) {
                c.oracle.target_token = parse_number<Token>("oracle.target_token", v);
              }},
      SIMS_REAL("oracle.w_target", oracle.weights.target_frequency),
      SIMS_REAL("oracle.w_distinct", oracle.weights.distinct_ratio),
      SIMS_REAL("oracle.w_repeat", oracle.weights.repetition),
      SIMS_REAL("oracle.flip_probability", oracle.flip_probability),
      SIMS_UINT("oracle.noise_seed", oracle.noise_seed),
      Binding{"oracle.ranking_template", [](const ExperimentConfig& c) { return c.oracle.ranking_template; },
              [](ExperimentConfig& c, const std::string& v) { c.oracle.ranking_template = v; }},
      SIMS_UINT("oracle.rank_max_new_tokens", oracle.rank_max_new_tokens),
      SIMS_BOOL("oracle.allow_rank_fallback", oracle.allow_rank_fallback),

      SIMS_UINT("eval.samples", eval.samples),
      SIMS_UINT("eval.seed", eval.seed),

      Binding{"output.dir", [](const ExperimentConfig& c) { return c.output_dir; },
              [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef SIMS_UINT
#undef SIMS_REAL
#undef SIMS_BOOL
#undef SIMS_ENUM
#undef SIMS_LIST

const Binding& find_binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.key == key) return b;
  }
  throw Error(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::kOracle: return "oracle";
    case Strategy::kRandom: return "random";
    case Strategy::kBestOfN: return "best-of-n";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "oracle") return Strategy::kOracle;
  if (name == "random") return Strategy::kRandom;
  if (name == "best-of-n" || name == "best_of_n") return Strategy::kBestOfN;
  throw Error(ErrorKind::kConfig, "unknown strategy '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  model.validate();
  loop.validate();
  oracle.validate();
  prompts.validate();
  if (eval.samples < 1) throw Error(ErrorKind::kConfig, "eval.samples must be >= 1");
  if (strategy == Strategy::kBestOfN && best_of_n_candidates < 1) {
    throw Error(ErrorKind::kConfig, "best_of_n_candidates must be >= 1");
  }
  if (strategy == Strategy::kBestOfN && prompts.validation_count < 1) {
    throw Error(ErrorKind::kConfig, "best-of-n needs validation prompts");
  }
  if (prompts.train_count < loop.prompts_per_iter) {
    throw Error(ErrorKind::kConfig, "data.train_prompts must be >= loop.N");
  }
  if (output_dir.empty()) throw Error(ErrorKind::kConfig, "output.dir must not be empty");
}

ExperimentConfig parse_config(std::string_view ini_text) {
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(ErrorKind::kConfig, "key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      find_binding(section + "." + key).set(c, value.data());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const ExperimentConfig& config) {
  std::string out;
  std::string current;
  for (const auto& b : bindings()) {
    const std::size_t dot = b.key.find('.');
    const std::string section = b.key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + section + "]\n";
      current = section;
    }
    out += b.key.substr(dot + 1) + " = " + b.get(config) + "\n";
  }
  return out;
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorKind::kConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  find_binding(assignment.substr(0, eq)).set(config, std::string(assignment.substr(eq + 1)));
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string text = to_ini(config);
  const auto* p = reinterpret_cast<const std::uint8_t*>(text.data());
  return mix64(crc32({p, text.size()}) ^ (static_cast<std::uint64_t>(text.size()) << 32));
}

}  // namespace sims
