#include "dfc/error.hpp"

namespace dfc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroWeightSum: return "ZeroWeightSum";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingContext: return "MissingContext";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::FeatureDimMismatch: return "FeatureDimMismatch";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleTrace: return "StaleTrace";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::EmptyHypothesisSet: return "EmptyHypothesisSet";
    case ErrorCode::AllSamplesDegenerate: return "AllSamplesDegenerate";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::CheckpointError: return "CheckpointError";
  }
  return "Unknown";
}

}  // namespace dfc
