#pragma once

#include <stdexcept>
#include <string>

namespace pt {

// Incompatible tensor or matrix shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or inconsistent input data (files, price tables, schedules).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weight stream and return table dates do not line up.
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values produced during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pt
