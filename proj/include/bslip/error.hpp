#pragma once

#include <stdexcept>
#include <string>

namespace bslip {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation invoked in the wrong state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace bslip
