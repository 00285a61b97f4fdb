#include "rescap/error.hpp"

namespace rescap {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedFasta: return "MalformedFasta";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IllegalResidue: return "IllegalResidue";
    case ErrorCode::UnresolvedId: return "UnresolvedId";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::BadSplit: return "BadSplit";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorCode::GraphCycle: return "GraphCycle";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteValueInGraph: return "NonFiniteValueInGraph";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace rescap
