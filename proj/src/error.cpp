#include "cheblap/error.hpp"

namespace cheblap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateDegree: return "DegenerateDegree";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::InvalidOrder: return "InvalidOrder";
    case ErrorCode::MismatchedBasis: return "MismatchedBasis";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DivisionGuard: return "DivisionGuard";
    case ErrorCode::MismatchedTrace: return "MismatchedTrace";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DegenerateReference: return "DegenerateReference";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericalAbort: return "NumericalAbort";
  }
  return "Unknown";
}

}  // namespace cheblap
