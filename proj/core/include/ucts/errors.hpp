#pragma once

#include <stdexcept>
#include <string>

namespace ucts {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user configuration: missing mapped columns, malformed spec files,
// invalid run options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a contract (duplicate dates, degenerate series).
class DataError : public Error {
 public:
  using Error::Error;
};

// Value outside the mathematical domain of an operation, e.g. log of a
// non-positive observation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Out-of-span indices, unsupported tabulated levels.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model specification: empty harmonic set, damping outside
// (0, 1], frequency outside 1..s/2.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Numerical failure inside the filter or an optimizer (non-positive
// innovation variance, all starts diverged).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Violated internal invariant; indicates a bug, not a user error.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ucts
