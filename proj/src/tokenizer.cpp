// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/tokenizer.hpp"

namespace sims {

TokenSeq encode(std::string_view text) {
  TokenSeq out;
  out.reserve(text.size());
  for (char c : text) out.push_back(static_cast<Token>(static_cast<unsigned char>(c)));
  return out;
}

TokenSeq encode_prompt(std::string_view text) {
  TokenSeq out;
  out.reserve(text.size() + 1);
  out.push_back(vocab::kBos);
  for (char c : text) out.push_back(static_cast<Token>(static_cast<unsigned char>(c)));
  return out;
}

std::string decode(const TokenSeq& tokens) {
  std::string out;
  for (Token t : tokens) {
    if (t >= 0 && t < vocab::kByteCount) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    } else if (t == vocab::kBos) {
      out += "<bos>";
    } else if (t == vocab::kEos) {
      out += "<eos>";
    } else if (t == vocab::kPad) {
      out += "<pad>";
    } else {
      out += "<?>";
    }
  }
  return out;
}

TokenSeq join_prompt_response(const TokenSeq& prompt, const TokenSeq& response) {
  TokenSeq out;
  out.reserve(prompt.size() + 1 + response.size());
  out.insert(out.end(), prompt.begin(), prompt.end());
  out.push_back(vocab::kResponseMarker);
  out.insert(out.end(), response.begin(), response.end());
  return out;
}

}  // namespace sims
