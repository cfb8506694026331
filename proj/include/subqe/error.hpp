#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subqe {

enum class ErrorCode {
  MalformedTimestamp,
  MissingIndex,
  EmptyBlock,
  DimMismatch,
  MalformedRow,
  LengthMismatch,
  EmptyAfterOov,
  EmptyMatrix,
  EmptyLexicon,
  TooShort,
  CorpusTooSmall,
  NoNeighborInWindow,
  NoEligibleTrigram,
  SingleClassData,
  OutOfRangeScore,
  ShapeMismatch,
  NonFiniteLoss,
  Empty,
  NoPositives,
  InvalidArgument,
  Io,
  Config,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTimestamp: return "MalformedTimestamp";
    case ErrorCode::MissingIndex: return "MissingIndex";
    case ErrorCode::EmptyBlock: return "EmptyBlock";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyAfterOov: return "EmptyAfterOov";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::EmptyLexicon: return "EmptyLexicon";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::NoNeighborInWindow: return "NoNeighborInWindow";
    case ErrorCode::NoEligibleTrigram: return "NoEligibleTrigram";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::OutOfRangeScore: return "OutOfRangeScore";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the ErrorCode kinds so
/// callers (and the CLI) can report it in a machine-parseable form.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace subqe
