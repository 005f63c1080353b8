#pragma once

#include <stdexcept>
#include <string>

namespace gwlz {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters (error bound, group count, training knobs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input values the pipeline cannot process (NaN/Inf, undefined metric).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated byte streams and files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checksum mismatch.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Shapes of two operands (or of a file and its declared dims) disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gwlz
