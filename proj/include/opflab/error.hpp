#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opflab {

enum class ErrorCode {
  // grid-io
  MalformedMatrix,
  DanglingBranch,
  NoReferenceBus,
  NonQuadraticCost,
  InvalidCase,
  NonPositiveBase,
  IoFailure,
  PairingViolation,
  // shared
  DimensionMismatch,
  // acpf
  MissingTruthFlows,
  // solver
  InfeasibleBounds,
  NonConvergence,
  // nn
  TapeNotRecorded,
  // learning
  UnknownVariant,
  NanLoss,
  EmptyDataset,
  // experiments
  CaseInfeasible,
  NoPairs,
  ZeroReference,
  EmptyTestSet,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Exception type used across the library. The code identifies the failure
/// class; the message carries the specifics (file, row, dimension, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace opflab
