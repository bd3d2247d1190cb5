#pragma once

#include <stdexcept>
#include <string>

namespace selb {

// Error categories. The CLI maps each to a one-line machine-readable
// diagnostic on stderr and a nonzero exit code.
enum class ErrorCode {
  shape_mismatch,
  domain,
  bad_magic,
  truncated,
  count_mismatch,
  bad_value,
  config,
  io,
  optim,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace selb
