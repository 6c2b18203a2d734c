#pragma once

#include <stdexcept>
#include <string>

namespace pamkit {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (bad RIFF header, broken JSON, truncated cache, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input is syntactically fine but we do not handle it (e.g. 24-bit WAV).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values. CLI maps this to exit code 3.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Lookup of a key that is not present (embedding cache, dataset id, ...).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A class does not have enough samples for the requested split.
class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure: divergence during training, undefined AUC, infinite
/// error reduction. The message names the offending quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pamkit
