#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace funsor {

enum class ErrorCode {
  TypeConflict,
  NameAbsent,
  TypeError,
  FuelExhausted,
  StackUnderflow,
  DomainError,
  RealVarNotSupported,
  IndexOutOfRange,
  BoundsError,
  ContextMismatch,
  MissingAssignment,
  RankDeficient,
  NotAffine,
  InvalidMatching,
  InvalidSubstitution,
  InvalidName,
  NotClosed,
  ParseError,
  ValidationError,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI) can report a stable identifier.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace funsor
