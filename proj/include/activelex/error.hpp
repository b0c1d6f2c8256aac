#pragma once

#include <stdexcept>
#include <string>

namespace activelex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (datasets, lexicons, manifests, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Caller passed arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Vector or model dimensions do not line up.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The unlabeled pool has no instances left to select.
class PoolExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace activelex
