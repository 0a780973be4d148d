#pragma once

#include <stdexcept>
#include <string>

namespace neighcnn {

// Base of every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument or configuration value (exit code 1).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Tensor extents do not fit the operation (exit code 1).
class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Unreadable, malformed or missing files (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a computation (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autograd tape, e.g. a second backward over the same graph.
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace neighcnn
