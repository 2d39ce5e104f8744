// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sims {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three
// reserved ids. BOS opens every prompt and doubles as the response marker
// between a prompt and its response.
namespace vocab {
inline constexpr Token kByteCount = 256;
inline constexpr Token kBos = 256;
inline constexpr Token kEos = 257;
inline constexpr Token kPad = 258;
inline constexpr Token kSize = 259;
inline constexpr Token kResponseMarker = kBos;
}  // namespace vocab

// Raw bytes, no specials.
TokenSeq encode(std::string_view text);

// BOS followed by the bytes of `text`.
TokenSeq encode_prompt(std::string_view text);

// Bytes back to text; reserved ids render as <bos>, <eos>, <pad>.
std::string decode(const TokenSeq& tokens);

// prompt ‖ response-marker ‖ response.
TokenSeq join_prompt_response(const TokenSeq& prompt, const TokenSeq& response);

// Index of the first response token inside join_prompt_response(prompt, ·).
inline std::size_t response_offset(const TokenSeq& prompt) { return prompt.size() + 1; }

}  // namespace sims
