#pragma once

#include <stdexcept>
#include <string>

namespace nd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or batch dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An invalid network or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation called in a state that does not permit it (stale cache, wrong method).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad argument value (out-of-range count, non-positive step or tolerance).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Lookup of a term or constraint that does not exist.
class KeyError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (e.g. sigma <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace nd
