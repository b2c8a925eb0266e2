// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tade {

/// Base of every error raised by the library. The CLI maps subclasses to
/// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (rho < 1, log 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value surfaced where a finite one was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A test split asked for more samples of a class than the pool holds.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (weights off the simplex, etc).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Training or adaptation produced NaN.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed config, CSV or file contents.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace tade
