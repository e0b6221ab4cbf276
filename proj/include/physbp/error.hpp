#pragma once

#include <stdexcept>
#include <string>

namespace physbp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Channel counts or matrix shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Sequence lengths do not match or do not divide as required.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters (mismatched dt, non-causal feedback, bad config values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A physical realizability bound was violated.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or an undefined metric.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace physbp
