#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvir {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied something the contract rejects (bad flag, unknown id,
/// wrong view, out-of-range fraction). The CLI maps these to exit code 2.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor or vector dimensions do not conform.
class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Malformed CVF or model file. Carries the 1-based line number.
class ParseError : public InvalidArgument {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InvalidArgument("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Numerical failure: singular covariance, non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvir
