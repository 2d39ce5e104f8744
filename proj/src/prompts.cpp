// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/prompts.hpp"

#include <numeric>

#include "sims/error.hpp"
#include "sims/rng.hpp"

namespace sims {
namespace {

constexpr const char* kCalm[] = {"ok.", "fine.", "it is good.", "a nice {noun}.", "i see.", "sure."};
constexpr const char* kExcited[] = {"wow!", "yay!", "so {adj}!", "great!", "love it!", "my {noun}!"};

std::string fill(const std::string& tmpl, const std::string& adj, const std::string& noun) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i]);
      continue;
    }
    const std::size_t close = tmpl.find('}', i);
    if (close == std::string::npos) throw Error(ErrorKind::kConfig, "unterminated placeholder in '" + tmpl + "'");
    const std::string name = tmpl.substr(i + 1, close - i - 1);
    if (name == "adj") {
      out += adj;
    } else if (name == "noun") {
      out += noun;
    } else {
      throw Error(ErrorKind::kConfig, "unknown placeholder {" + name + "} in prompt template '" + tmpl + "'");
    }
    i = close;
  }
  return out;
}

}  // namespace

PromptSpec PromptSpec::defaults() {
  PromptSpec s;
  s.templates = {"tell me about the {adj} {noun}.", "what is a {adj} {noun}?", "describe my {adj} {noun}.",
                 "any news on the {adj} {noun}?",   "how was the {adj} {noun}?", "rate this {adj} {noun}."};
  s.adjectives = {"red", "old", "big", "new", "tiny", "blue", "warm", "dark", "soft", "loud", "calm", "odd"};
  s.nouns = {"cat",  "dog",  "car",  "tree", "song", "book", "game", "cake", "boat", "lamp",
             "park", "shop", "film", "road", "ship", "bird", "fish", "door", "desk", "hat",
             "ring", "coat", "bike", "farm", "lake", "hill", "town", "room", "wall", "bell",
             "drum", "kite", "map",  "pen",  "cup",  "box",  "bus",  "fox",  "owl",  "bee"};
  return s;
}

void PromptSpec::validate() const {
  if (templates.empty() || adjectives.empty() || nouns.empty()) {
    throw Error(ErrorKind::kConfig, "prompt templates, adjectives and nouns must be non-empty");
  }
  if (train_count < 1 || eval_count < 1) throw Error(ErrorKind::kConfig, "prompt counts must be >= 1");
  for (const auto& t : templates) fill(t, "", "");
}

std::vector<std::string> enumerate_prompts(const PromptSpec& spec) {
  spec.validate();
  std::vector<std::string> out;
  out.reserve(spec.templates.size() * spec.adjectives.size() * spec.nouns.size());
  for (const auto& t : spec.templates) {
    for (const auto& a : spec.adjectives) {
      for (const auto& n : spec.nouns) out.push_back(fill(t, a, n));
    }
  }
  return out;
}

PromptSets make_prompt_source(const PromptSpec& spec, std::uint64_t seed) {
  const std::vector<std::string> all = enumerate_prompts(spec);
  const std::size_t need =
      static_cast<std::size_t>(spec.eval_count) + spec.validation_count + spec.train_count;
  if (all.size() < need) {
    throw Error(ErrorKind::kConfig, "prompt space has " + std::to_string(all.size()) + " prompts, " +
                                        std::to_string(need) + " requested");
  }
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {stream::kPrompts}));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

  PromptSets sets;
  std::size_t pos = 0;
  for (std::uint32_t i = 0; i < spec.eval_count; ++i) sets.eval.push_back(encode_prompt(all[idx[pos++]]));
  for (std::uint32_t i = 0; i < spec.validation_count; ++i) {
    sets.validation.push_back(encode_prompt(all[idx[pos++]]));
  }
  for (std::uint32_t i = 0; i < spec.train_count; ++i) sets.train.prompts.push_back(encode_prompt(all[idx[pos++]]));
  return sets;
}

std::vector<TokenSeq> make_pretraining_corpus(const PromptSpec& prompts, const CorpusSpec& corpus,
                                              std::uint64_t seed) {
  prompts.validate();
  Rng rng(derive_seed(seed, {stream::kCorpus}));
  std::vector<TokenSeq> out;
  out.reserve(corpus.count);
  for (std::uint32_t i = 0; i < corpus.count; ++i) {
    const auto& tmpl = prompts.templates[rng.below(prompts.templates.size())];
    const auto& adj = prompts.adjectives[rng.below(prompts.adjectives.size())];
    const auto& noun = prompts.nouns[rng.below(prompts.nouns.size())];
    const double style = rng.uniform();
    const std::size_t fragments = 2 + rng.below(2);
    std::string response;
    for (std::size_t f = 0; f < fragments; ++f) {
      const bool excited = rng.bernoulli(style);
      const std::string piece = fill(excited ? kExcited[rng.below(std::size(kExcited))]
                                             : kCalm[rng.below(std::size(kCalm))],
                                     adj, noun);
      const std::size_t len = response.size() + (response.empty() ? 0 : 1) + piece.size();
      if (len > corpus.max_response_bytes) break;
      if (!response.empty()) response.push_back(' ');
      response += piece;
    }
    TokenSeq seq = join_prompt_response(encode_prompt(fill(tmpl, adj, noun)), encode(response));
    seq.push_back(vocab::kEos);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace sims
