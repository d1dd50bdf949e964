#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xdsv {

enum class ErrorKind { Parse, Validation, Shape, Io, Config, Numeric, Argument };

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this exception. The kind maps to
// the machine-readable prefix the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace xdsv
