#pragma once

#include <stdexcept>
#include <string>

namespace mbtf {

// Input violates a documented precondition (shape, range, finiteness).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Signal is too short for the requested operation.
class LengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Object used in the wrong lifecycle state (e.g. backward without forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Inconsistent or unknown configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable file content.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mbtf
