#pragma once

#include <stdexcept>
#include <string>

namespace dstcgcn {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed file that does not describe a usable dataset.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Bad or unknown configuration key/value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not match the expected format or model/data shapes.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dstcgcn
