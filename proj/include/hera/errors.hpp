// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hera {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform to a primitive's signature.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity reached a place that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Class id outside the vocabulary of a level.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or experiment configuration.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Checkpoint could not be read or does not match this build.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace hera
