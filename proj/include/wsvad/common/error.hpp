#pragma once

#include <stdexcept>
#include <string>

namespace wsvad {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on caller-supplied data was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Tensor extents do not agree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file on disk is truncated, has a bad magic, or is otherwise malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A quantity is mathematically undefined for the given input
/// (e.g. AUC on a single-class reference).
class Undefined : public Error {
 public:
  using Error::Error;
};

}  // namespace wsvad
