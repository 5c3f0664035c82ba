#pragma once

#include <stdexcept>
#include <string>

namespace stotop {

/// Error categories surfaced through the C API as status codes.
enum class ErrorCode : int {
  InvalidInput = 1,
  InvalidState = 2,
  SolverFailure = 3,
  Configuration = 4,
  DomainVoid = 5,
  StepRejected = 6,
  Io = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, const std::string& what, ErrorCode code = ErrorCode::InvalidInput) {
  if (!ok) throw Error(code, what);
}

}  // namespace stotop
