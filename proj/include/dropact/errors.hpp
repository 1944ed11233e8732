#pragma once

#include <stdexcept>
#include <string>

namespace dropact {

/// Operand shapes do not compose.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar parameter lies outside its admissible range.
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke an API precondition (non-scalar loss, missing mask, ...).
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Request exceeds what an exact algorithm can handle.
class CapacityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Model layout does not support the requested operation.
class ConfigurationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary or text input.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Payload shorter or longer than its header declares.
class LengthError : public FormatError {
public:
  using FormatError::FormatError;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace dropact
