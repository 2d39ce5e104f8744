// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/report.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sims/error.hpp"

namespace sims {

IterationTrace parse_trace_line(std::string_view line) {
  IterationTrace tr;
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.at("schema").get<int>() != 1) {
      throw Error(ErrorKind::kUnsupportedVersion, "trace schema " + j.at("schema").dump());
    }
    tr.t = j.at("t").get<std::uint32_t>();
    tr.variant = j.at("variant").get<std::string>();
    tr.policy_file = j.value("policy", std::string());
    tr.d_plus = j.at("d_plus").get<std::size_t>();
    tr.d_minus = j.at("d_minus").get<std::size_t>();
    tr.mean_oracle_score = j.at("mean_oracle_score").get<double>();
    tr.skipped_prompts = j.at("skipped_prompts").get<std::size_t>();
    tr.ranking_fallbacks = j.at("ranking_fallbacks").get<std::uint32_t>();
    tr.active_slots = j.value("active_slots", std::size_t{0});
    tr.wall_ms = j.value("wall_ms", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kProtocol, std::string("malformed trace line: ") + e.what());
  }
  return tr;
}

std::vector<IterationTrace> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open trace file " + path.string());
  std::vector<IterationTrace> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_trace_line(line));
    if (out.size() > 1 && out.back().t <= out[out.size() - 2].t) {
      throw Error(ErrorKind::kProtocol, "trace iterations not strictly increasing in " + path.string());
    }
  }
  return out;
}

std::vector<ReportRow> aggregate_traces(const std::vector<std::vector<IterationTrace>>& runs) {
  std::map<std::uint32_t, ReportRow> acc;
  for (const auto& run : runs) {
    for (const auto& tr : run) {
      ReportRow& r = acc[tr.t];
      r.t = tr.t;
      ++r.runs;
      r.d_plus += static_cast<double>(tr.d_plus);
      r.d_minus += static_cast<double>(tr.d_minus);
      r.mean_oracle_score += tr.mean_oracle_score;
      r.skipped_prompts += static_cast<double>(tr.skipped_prompts);
      r.ranking_fallbacks += tr.ranking_fallbacks;
    }
  }
  std::vector<ReportRow> rows;
  for (auto& [t, r] : acc) {
    const double n = static_cast<double>(r.runs);
    r.d_plus /= n;
    r.d_minus /= n;
    r.mean_oracle_score /= n;
    r.skipped_prompts /= n;
    r.ranking_fallbacks /= n;
    rows.push_back(r);
  }
  return rows;
}

std::string format_report_tsv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "t\truns\td_plus\td_minus\tmean_oracle_score\tskipped_prompts\tranking_fallbacks\n";
  out.precision(6);
  for (const auto& r : rows) {
    out << r.t << '\t' << r.runs << '\t' << r.d_plus << '\t' << r.d_minus << '\t' << r.mean_oracle_score << '\t'
        << r.skipped_prompts << '\t' << r.ranking_fallbacks << '\n';
  }
  return out.str();
}

std::string format_report_jsonl(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["t"] = r.t;
    j["runs"] = r.runs;
    j["d_plus"] = r.d_plus;
    j["d_minus"] = r.d_minus;
    j["mean_oracle_score"] = r.mean_oracle_score;
    j["skipped_prompts"] = r.skipped_prompts;
    j["ranking_fallbacks"] = r.ranking_fallbacks;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace sims
