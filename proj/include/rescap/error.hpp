#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rescap {

enum class ErrorCode {
  // seqio
  MalformedFasta,
  DuplicateId,
  IllegalResidue,
  UnresolvedId,
  BadLabel,
  BadSplit,
  // featurize
  BadMagic,
  DimMismatch,
  TruncatedFile,
  NonFiniteValue,
  MissingFeature,
  // redundancy
  EmptySequence,
  // autodiff
  ShapeMismatch,
  TargetOutOfRange,
  GraphCycle,
  NonFiniteGradient,
  NonFiniteValueInGraph,
  // model
  InvalidConfig,
  KindMismatch,
  VersionMismatch,
  CorruptCheckpoint,
  // harness
  SingleClass,
  TooFewSamples,
  NonFiniteLoss,
  // general
  IoError,
  InvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

/// Every library failure is reported as an Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rescap
