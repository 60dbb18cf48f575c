#pragma once

#include <stdexcept>
#include <string>

namespace dsmpc {

/// Mismatched matrix or vector shapes. The message names the offending field.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain where a function is defined or certified.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative method did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario document; the message carries the JSON field path.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsmpc
