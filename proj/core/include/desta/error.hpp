#pragma once

#include <stdexcept>
#include <string>

namespace desta {

inline constexpr const char* kToolVersion = "0.1.0";

// Bad input data, broken invariants, unusable configuration. Pipeline
// stages map this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Endpoint unreachable after the retry budget is spent. Maps to exit code 2.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text that does not conform to an expected grammar; carries the position.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, size_t line, size_t column)
      : std::runtime_error(what + " at line " + std::to_string(line) +
                           ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}

  size_t line() const { return line_; }
  size_t column() const { return column_; }

 private:
  size_t line_;
  size_t column_;
};

}  // namespace desta
