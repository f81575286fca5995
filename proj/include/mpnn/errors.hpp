#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mpnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A model/train/search configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a forward value or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class UnsupportedElementError : public Error {
 public:
  using Error::Error;
};

class DegenerateTargetError : public Error {
 public:
  using Error::Error;
};

class SearchFailedError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mpnn
