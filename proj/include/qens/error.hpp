#pragma once

#include <stdexcept>
#include <string>

namespace qens {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Dimension or length mismatch between arguments.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Gate index out of range or control == target.
class InvalidGateError : public Error {
  public:
    using Error::Error;
};

/// Non-finite values or a diverging optimisation.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// A precondition on configuration or sizes does not hold.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed or inconsistent input data (CSV rows, timestamps, missing columns).
class DataError : public Error {
  public:
    using Error::Error;
};

/// A persisted artifact was written by an incompatible format version.
class VersionError : public Error {
  public:
    using Error::Error;
};

} // namespace qens
