#pragma once

#include <stdexcept>
#include <string>

namespace hippo {

// Base of every exception the library throws. The CLI maps the concrete type
// to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or axes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf escaped from an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyperparameters (tau <= 0, alpha outside (0,1), ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed input files. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Files that cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Inputs that parse but violate a semantic contract (unknown node, empty
// split, inconsistent mapping).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hippo
