#pragma once

#include <stdexcept>
#include <string>

namespace difd {

/// Base for every error raised by the library. The CLI maps each subclass to
/// a process exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, invalid configuration values, variant/input mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range input data (labels, rasters, manifests).
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system failures: missing files, unwritable directories.
class IoError : public Error {
 public:
  using Error::Error;
};

inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace difd
