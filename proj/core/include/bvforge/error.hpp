#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bvforge {

enum class ErrorKind {
  OutOfBounds,
  GridTooCoarse,
  OutOfDomain,
  NewtonDiverged,
  CalibrationUnreachable,
  DegenerateX,
  InsufficientPoints,
  NotReachable,
  MissingVerification,
  MissingPair,
  ConstantFeature,
  NonFiniteLoss,
  TooFewSamples,
  ZeroVariance,
  NonFiniteObjective,
  SchemaMismatch,
  MissingColumn,
  MissingFile,
  InvalidArgument,
};

/// Which family a failure belongs to; the CLI maps these onto exit codes.
enum class ErrorCategory { Domain, Schema, MissingFile };

std::string_view to_string(ErrorKind kind);
ErrorCategory category_of(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace bvforge
