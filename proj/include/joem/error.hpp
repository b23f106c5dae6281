#pragma once

#include <stdexcept>
#include <string>

namespace joem {

enum class ErrorKind {
  invalid_parameter,
  invalid_input,
  invalid_label,
  unknown_class,
  undefined_loss,
  undefined_metric,
  degenerate_input,
  numeric_failure,
  io_failure,
};

/// Library-wide exception carrying a machine-checkable kind next to the message.
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

}  // namespace joem
