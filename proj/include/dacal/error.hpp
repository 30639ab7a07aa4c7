#pragma once

#include <stdexcept>
#include <string>

namespace dacal {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, manifest, or precondition on parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates an invariant (non-finite values, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A tensor file does not follow the on-disk format.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Matrix dimensions are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dacal
