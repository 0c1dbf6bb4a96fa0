#pragma once

#include <stdexcept>
#include <string>

namespace priorloom {

// Malformed input file or record.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// Caller supplied arguments that violate an operation's precondition.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A numerical routine could not proceed (singular system, non-finite value,
// failed monotonicity check).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Lookup of an unknown session or dataset.
class NotFoundError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace priorloom
