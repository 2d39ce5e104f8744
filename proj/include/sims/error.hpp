// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sims {

enum class ErrorKind {
  kConfig,
  kSamplingConfig,
  kSequenceLength,
  kSteeringShape,
  kInsufficientData,
  kArtifactFormat,
  kUnsupportedVersion,
  kProtocol,
  kIo,
  kTrainingDivergence,
  kRankingParse,
  kEmptyPreferenceSet,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Process exit codes used by the CLI. Usage errors (unknown flags) are 2.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kRuntime = 5,
};

ExitCode exit_code_for(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sims
