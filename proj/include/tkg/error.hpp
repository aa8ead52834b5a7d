#pragma once

#include <stdexcept>
#include <string>

namespace tkg {

// Failure classes surfaced across the library. The CLI maps these onto
// process exit codes (input=2, infeasible=3, format=4, numeric=5).
enum class ErrorKind {
  MalformedLine,
  UnknownSymbol,
  NonNumericTime,
  EmptySparseSet,
  InfeasiblePartition,
  SpanTooShort,
  ShapeMismatch,
  NonScalarLoss,
  HistoryLengthMismatch,
  NoFeasibleTask,
  NonFiniteLoss,
  EmptyRankList,
  EmptyPartition,
  NegativeGap,
  InvalidConfig,
  IoError,
  FormatError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownSymbol: return "UnknownSymbol";
    case ErrorKind::NonNumericTime: return "NonNumericTime";
    case ErrorKind::EmptySparseSet: return "EmptySparseSet";
    case ErrorKind::InfeasiblePartition: return "InfeasiblePartition";
    case ErrorKind::SpanTooShort: return "SpanTooShort";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::HistoryLengthMismatch: return "HistoryLengthMismatch";
    case ErrorKind::NoFeasibleTask: return "NoFeasibleTask";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyRankList: return "EmptyRankList";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::NegativeGap: return "NegativeGap";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace tkg
