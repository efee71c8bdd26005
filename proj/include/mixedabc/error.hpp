#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixedabc {

enum class ErrorCode {
  // dataset
  MissingColumn,
  TypeMismatch,
  EmptyFile,
  ZeroVariance,
  InvalidConfig,
  InvalidSchema,
  // surrogate
  EmptyDataset,
  NonFiniteTarget,
  WidthMismatch,
  TooFewRows,
  InvalidHyperparameters,
  // distfit
  SupportViolation,
  DegenerateSample,
  NoValidCandidate,
  ChainDiverged,
  // abc
  TooFewValues,
  MissingPrior,
  AllZeroWeights,
  UnknownFeature,
  // geometry
  ZeroVector,
  DisconnectedDegenerate,
  UnknownGeometry,
  EmptyDescription,
  // pipeline / io
  StageFailure,
  IoError,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mixedabc
