#pragma once

#include <stdexcept>
#include <string>

namespace dgsum {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Artifacts that should describe the same nodes disagree on their count.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable numeric data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The corpus failed validation; training refuses to start.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgsum
