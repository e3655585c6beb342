#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cheblap {

enum class ErrorCode {
  NonFinite,
  DegenerateDegree,
  NotSymmetric,
  DegenerateSpectrum,
  InvalidOrder,
  MismatchedBasis,
  ShapeMismatch,
  DivisionGuard,
  MismatchedTrace,
  InvalidLabel,
  DegenerateReference,
  TooShort,
  IndexOutOfRange,
  ParseError,
  MissingFile,
  EmptySplit,
  ConfigError,
  NumericalAbort,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as this exception; code() lets
// callers (the CLI in particular) map failures to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cheblap
