#pragma once

#include <stdexcept>
#include <string>

namespace dexined {

// Error families map one-to-one onto CLI exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: unknown keys, inconsistent hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable, missing or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a forward value, gradient or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operand shapes that violate an op's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace dexined
