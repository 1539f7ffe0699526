#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace psdip {

// Failure categories; the CLI maps them onto exit codes 2/3/4.
enum class ErrorKind { invalid_argument, io, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Stable machine-readable identifier such as "shape.mismatch" or "npy.fortran_order".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail_argument(std::string code, const std::string& message) {
  throw Error(ErrorKind::invalid_argument, std::move(code), message);
}

[[noreturn]] inline void fail_io(std::string code, const std::string& message) {
  throw Error(ErrorKind::io, std::move(code), message);
}

[[noreturn]] inline void fail_numerical(std::string code, const std::string& message) {
  throw Error(ErrorKind::numerical, std::move(code), message);
}

inline void require(bool condition, const char* code, const std::string& message) {
  if (!condition) fail_argument(code, message);
}

}  // namespace psdip
