#pragma once

#include <stdexcept>
#include <string>

namespace dsb {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configuration values, shapes, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents cannot be trusted (truncated, bad checksum).
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class VersionMismatchError : public Error {
 public:
  using Error::Error;
};

// A probability computation has no valid normalizer, e.g. an endpoint pair that
// the reference process cannot connect.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a computation that must stay finite, or a training loss diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotConvergedError : public Error {
 public:
  NotConvergedError(const std::string& what, double row_residual, double col_residual)
      : Error(what), row_residual_(row_residual), col_residual_(col_residual) {}
  double row_residual() const { return row_residual_; }
  double col_residual() const { return col_residual_; }

 private:
  double row_residual_;
  double col_residual_;
};

}  // namespace dsb
