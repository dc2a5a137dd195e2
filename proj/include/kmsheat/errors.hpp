#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kmsheat {

enum class ErrorCode {
  InvalidInput,
  DivergentSeries,
  MissingGrowthBound,
  WindowTooNarrow,
  ZeroDenominator,
  NegativeWeight,
  EmptySpectrum,
  InsufficientSamples,
  NotDivergent,
  ScheduleExceedsData,
  DivergentSum,
  NotPrimitive,
  BelowCritical,
  BelowLogE,
  IncompleteStateTable,
  ZeroTrace,
  NotCritical,
  LNConditionViolated,
  BelowThreshold,
  ShallowCylinder,
  DepthInsufficient,
  CutoffInsufficient,
  MatrixTooLarge,
  SchemaError,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DivergentSeries: return "DivergentSeries";
    case ErrorCode::MissingGrowthBound: return "MissingGrowthBound";
    case ErrorCode::WindowTooNarrow: return "WindowTooNarrow";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::EmptySpectrum: return "EmptySpectrum";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NotDivergent: return "NotDivergent";
    case ErrorCode::ScheduleExceedsData: return "ScheduleExceedsData";
    case ErrorCode::DivergentSum: return "DivergentSum";
    case ErrorCode::NotPrimitive: return "NotPrimitive";
    case ErrorCode::BelowCritical: return "BelowCritical";
    case ErrorCode::BelowLogE: return "BelowLogE";
    case ErrorCode::IncompleteStateTable: return "IncompleteStateTable";
    case ErrorCode::ZeroTrace: return "ZeroTrace";
    case ErrorCode::NotCritical: return "NotCritical";
    case ErrorCode::LNConditionViolated: return "LNConditionViolated";
    case ErrorCode::BelowThreshold: return "BelowThreshold";
    case ErrorCode::ShallowCylinder: return "ShallowCylinder";
    case ErrorCode::DepthInsufficient: return "DepthInsufficient";
    case ErrorCode::CutoffInsufficient: return "CutoffInsufficient";
    case ErrorCode::MatrixTooLarge: return "MatrixTooLarge";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace kmsheat
