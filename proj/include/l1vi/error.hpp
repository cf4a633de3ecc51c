#pragma once

#include <stdexcept>
#include <string>

namespace l1vi {

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidProblem,
  kInconsistentSlackness,
  kMaxIterations,
  kLinearSolveFailure,
  kBiactiveNonempty,
  kNoConvergence,
  kZeroGradient,
  kSingularModel,
  kNoPatternAccepted,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidProblem: return "InvalidProblem";
    case ErrorCode::kInconsistentSlackness: return "InconsistentSlackness";
    case ErrorCode::kMaxIterations: return "MaxIterations";
    case ErrorCode::kLinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::kBiactiveNonempty: return "BiactiveNonempty";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kZeroGradient: return "ZeroGradient";
    case ErrorCode::kSingularModel: return "SingularModel";
    case ErrorCode::kNoPatternAccepted: return "NoPatternAccepted";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require_size(long actual, long expected, const char* what) {
  if (actual != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + " has length " + std::to_string(actual) +
                    ", expected " + std::to_string(expected));
  }
}

}  // namespace detail
}  // namespace l1vi
