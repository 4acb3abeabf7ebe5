#pragma once

#include <stdexcept>
#include <string>

namespace gnfeat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of inputs do not agree (rows/cols/lengths).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value, e.g. a non-finite input or a negative std.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A linear solve, eigen-decomposition or update produced an unusable result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// File format errors. Each failure mode gets its own type so callers can
// tell a stale file from a damaged one.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MalformedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace gnfeat
