#include "attnflow/error.hpp"

namespace attnflow {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ReservedToken: return "ReservedToken";
    case ErrorCode::MissingTimestamps: return "MissingTimestamps";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::SelfEdgeOnSourceOrSink: return "SelfEdgeOnSourceOrSink";
    case ErrorCode::EmptyNetwork: return "EmptyNetwork";
    case ErrorCode::AllNodesDropped: return "AllNodesDropped";
    case ErrorCode::ZeroOutflowRow: return "ZeroOutflowRow";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::UnreachablePair: return "UnreachablePair";
    case ErrorCode::DegenerateX: return "DegenerateX";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NegativeValue: return "NegativeValue";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::NotCertified: return "NotCertified";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MismatchedNetworks: return "MismatchedNetworks";
    case ErrorCode::SizeGuard: return "SizeGuard";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace attnflow
