#pragma once

#include <stdexcept>
#include <string>

namespace qkdlink {

// Bad or incomplete configuration (unknown key, missing factor, bad unit).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A formula was evaluated at a point where it is undefined.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An iterative fit stopped without meeting its convergence test.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public std::invalid_argument {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::invalid_argument("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qkdlink
