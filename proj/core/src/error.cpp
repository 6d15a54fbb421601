#include "bvforge/error.hpp"

namespace bvforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::NewtonDiverged: return "NewtonDiverged";
    case ErrorKind::CalibrationUnreachable: return "CalibrationUnreachable";
    case ErrorKind::DegenerateX: return "DegenerateX";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::NotReachable: return "NotReachable";
    case ErrorKind::MissingVerification: return "MissingVerification";
    case ErrorKind::MissingPair: return "MissingPair";
    case ErrorKind::ConstantFeature: return "ConstantFeature";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SchemaMismatch:
    case ErrorKind::MissingColumn:
      return ErrorCategory::Schema;
    case ErrorKind::MissingFile:
      return ErrorCategory::MissingFile;
    default:
      return ErrorCategory::Domain;
  }
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace bvforge
