#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftforge {

/// Raised when caller-supplied configuration or arguments violate a precondition.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an input file cannot be parsed. Carries the 1-based line number.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Raised when a numerical routine cannot produce a finite answer.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace driftforge
