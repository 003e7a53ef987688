#pragma once

#include <stdexcept>
#include <string>

namespace dtjrd {

// Violated precondition on an argument (range, emptiness, ordering).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes do not conform for the requested operation.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// An operation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed checkpoint, manifest line or exchange file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Record-level validation failure (bbox, label range, duplicates).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// External codec failed or produced no usable output.
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dtjrd
