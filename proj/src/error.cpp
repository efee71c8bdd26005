#include "mixedabc/error.hpp"

namespace mixedabc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteTarget: return "NonFiniteTarget";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::InvalidHyperparameters: return "InvalidHyperparameters";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::NoValidCandidate: return "NoValidCandidate";
    case ErrorCode::ChainDiverged: return "ChainDiverged";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::MissingPrior: return "MissingPrior";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DisconnectedDegenerate: return "DisconnectedDegenerate";
    case ErrorCode::UnknownGeometry: return "UnknownGeometry";
    case ErrorCode::EmptyDescription: return "EmptyDescription";
    case ErrorCode::StageFailure: return "StageFailure";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace mixedabc
