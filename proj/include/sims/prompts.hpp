// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sims/simloop.hpp"
#include "sims/tokenizer.hpp"

namespace sims {

// Prompts are the product of templates x adjectives x nouns. Templates may
// use the placeholders {adj} and {noun}; anything else is a config error.
struct PromptSpec {
  std::vector<std::string> templates;
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  std::uint32_t train_count = 512;
  std::uint32_t eval_count = 64;
  std::uint32_t validation_count = 16;

  static PromptSpec defaults();
  void validate() const;
  bool operator==(const PromptSpec&) const = default;
};

// Responses mix calm and excited fragments. Each corpus response draws a
// style level s ~ U(0, 1) and makes every fragment excited with probability
// s, so the same prompt admits responses across the whole range of '!'
// density.
struct CorpusSpec {
  std::uint32_t count = 3000;
  std::uint32_t max_response_bytes = 22;

  bool operator==(const CorpusSpec&) const = default;
};

std::vector<std::string> enumerate_prompts(const PromptSpec& spec);

struct PromptSets {
  PromptPool train;
  std::vector<TokenSeq> eval;
  std::vector<TokenSeq> validation;
};

// Shuffles the product space with `seed` and cuts it into disjoint
// eval | validation | train index ranges.
PromptSets make_prompt_source(const PromptSpec& spec, std::uint64_t seed);

// prompt ‖ marker ‖ response ‖ EOS sequences for pretraining.
std::vector<TokenSeq> make_pretraining_corpus(const PromptSpec& prompts, const CorpusSpec& corpus,
                                              std::uint64_t seed);

}  // namespace sims
