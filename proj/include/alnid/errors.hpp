#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace alnid {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data. Carries the 1-based source line and, when known,
/// the 0-based field index at which the failure was detected.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, int field = -1)
      : Error(annotate(message, line, field)), line_(line), field_(field) {}

  std::size_t line() const noexcept { return line_; }
  int field() const noexcept { return field_; }

 private:
  static std::string annotate(const std::string& message, std::size_t line, int field) {
    std::string out = message;
    if (line > 0) out += " (line " + std::to_string(line);
    if (line > 0 && field >= 0) out += ", field " + std::to_string(field);
    if (line > 0) out += ")";
    return out;
  }

  std::size_t line_;
  int field_;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Linear system is singular or too ill-conditioned to solve reliably.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

}  // namespace alnid
