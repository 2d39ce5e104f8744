// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sims/simloop.hpp"

namespace sims {

IterationTrace parse_trace_line(std::string_view line);
std::vector<IterationTrace> read_traces(const std::filesystem::path& path);

// Per-iteration means across runs.
struct ReportRow {
  std::uint32_t t = 0;
  std::size_t runs = 0;
  double d_plus = 0.0;
  double d_minus = 0.0;
  double mean_oracle_score = 0.0;
  double skipped_prompts = 0.0;
  double ranking_fallbacks = 0.0;

  bool operator==(const ReportRow&) const = default;
};

std::vector<ReportRow> aggregate_traces(const std::vector<std::vector<IterationTrace>>& runs);

// Tab-separated table with a header line, one row per iteration.
std::string format_report_tsv(const std::vector<ReportRow>& rows);
// One JSON object per row, schema 1.
std::string format_report_jsonl(const std::vector<ReportRow>& rows);

}  // namespace sims
