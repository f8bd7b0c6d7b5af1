#pragma once

#include <stdexcept>
#include <string>

namespace reid {

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  io,
  parse,
  format_version,
  format_shape,
  insufficient_data,
  non_finite,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::format_version: return "version error";
    case ErrorKind::format_shape: return "shape error";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::non_finite: return "non-finite value";
  }
  return "error";
}

// Every failure the library reports carries a kind so callers (and tests)
// can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace reid
