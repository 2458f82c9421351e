#pragma once

#include <stdexcept>
#include <string>

namespace iag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent tensor shapes or lattice sizes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on argument values was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or an impossible numeric state.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system failure (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace iag
