#pragma once

#include <stdexcept>
#include <string>

#include "nails/types.hpp"

namespace nails {

/// Argument dimensions violate the callee's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or insufficient data (parse failures, missing warm-up rows, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: rank-deficient system, bad conditioning, non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Function evaluated outside its domain.
class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Simulation produced a non-finite value; carries the offending step index.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& msg, Index step)
      : NumericError(msg + " at step " + std::to_string(step)), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

}  // namespace nails
