#include "opflab/error.hpp"

namespace opflab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedMatrix: return "MalformedMatrix";
    case ErrorCode::DanglingBranch: return "DanglingBranch";
    case ErrorCode::NoReferenceBus: return "NoReferenceBus";
    case ErrorCode::NonQuadraticCost: return "NonQuadraticCost";
    case ErrorCode::InvalidCase: return "InvalidCase";
    case ErrorCode::NonPositiveBase: return "NonPositiveBase";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::PairingViolation: return "PairingViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingTruthFlows: return "MissingTruthFlows";
    case ErrorCode::InfeasibleBounds: return "InfeasibleBounds";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::TapeNotRecorded: return "TapeNotRecorded";
    case ErrorCode::UnknownVariant: return "UnknownVariant";
    case ErrorCode::NanLoss: return "NanLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::CaseInfeasible: return "CaseInfeasible";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace opflab
