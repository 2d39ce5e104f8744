// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/error.hpp"

namespace sims {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kSamplingConfig: return "sampling-config error";
    case ErrorKind::kSequenceLength: return "sequence-length error";
    case ErrorKind::kSteeringShape: return "steering-shape error";
    case ErrorKind::kInsufficientData: return "insufficient-data error";
    case ErrorKind::kArtifactFormat: return "artifact-format error";
    case ErrorKind::kUnsupportedVersion: return "unsupported-version error";
    case ErrorKind::kProtocol: return "protocol error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kTrainingDivergence: return "training-divergence error";
    case ErrorKind::kRankingParse: return "ranking-parse error";
    case ErrorKind::kEmptyPreferenceSet: return "empty-preference-set error";
  }
  return "error";
}

ExitCode exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kSamplingConfig:
      return ExitCode::kConfig;
    case ErrorKind::kSequenceLength:
    case ErrorKind::kSteeringShape:
    case ErrorKind::kInsufficientData:
    case ErrorKind::kArtifactFormat:
    case ErrorKind::kUnsupportedVersion:
    case ErrorKind::kProtocol:
    case ErrorKind::kIo:
      return ExitCode::kData;
    case ErrorKind::kTrainingDivergence:
    case ErrorKind::kRankingParse:
    case ErrorKind::kEmptyPreferenceSet:
      return ExitCode::kRuntime;
  }
  return ExitCode::kRuntime;
}

}  // namespace sims
