#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dfc {

enum class ErrorCode {
  InvalidArgument,
  ZeroWeightSum,
  DegenerateGeometry,
  ParseError,
  IoError,
  DimensionMismatch,
  MissingContext,
  EmptyCloud,
  FeatureDimMismatch,
  TooFewCorrespondences,
  ShapeMismatch,
  StaleTrace,
  NonPositiveSigma,
  EmptyHypothesisSet,
  AllSamplesDegenerate,
  LengthMismatch,
  DivergenceDetected,
  CheckpointError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dfc
