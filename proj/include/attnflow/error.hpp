#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attnflow {

enum class ErrorCode {
  MalformedRecord,
  EmptyInput,
  ReservedToken,
  MissingTimestamps,
  NegativeWeight,
  SelfEdgeOnSourceOrSink,
  EmptyNetwork,
  AllNodesDropped,
  ZeroOutflowRow,
  SingularSystem,
  UnreachablePair,
  DegenerateX,
  TooFewPoints,
  NegativeValue,
  AllZero,
  SingularDesign,
  InsufficientData,
  TooFewRows,
  NotCertified,
  InvalidSpec,
  MismatchedNetworks,
  SizeGuard,
  InvalidArgument,
  IoError,
};

std::string_view code_name(ErrorCode code) noexcept;

/// Exception carrying a stable machine-readable code. `nodes` names the
/// offending items where that is meaningful (singular components, collinear
/// columns).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> nodes = {})
      : std::runtime_error(message), code_(code), nodes_(std::move(nodes)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }

 private:
  ErrorCode code_;
  std::vector<std::string> nodes_;
};

}  // namespace attnflow
