#pragma once

#include <stdexcept>
#include <string>

namespace floodda {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required input file or dataset is absent or does not cover the request.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside the hydraulic model or the filter.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected in a model state; carries the offending cell.
class NonFiniteStateError : public ModelError {
 public:
  NonFiniteStateError(const std::string& what, long cell)
      : ModelError(what), cell_(cell) {}

  long cell() const noexcept { return cell_; }

 private:
  long cell_;
};

}  // namespace floodda
