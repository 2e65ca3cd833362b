#pragma once

#include <stdexcept>
#include <string>

namespace moe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: dimension mismatch, non-finite values, wrong response kind,
/// invalid configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not proceed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A Gram or curvature matrix is singular (constant or collinear columns).
class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A component's total responsibility fell below n * 1e-12.
class EmptyComponentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The average Hessian of the log density is not invertible.
class SingularInformationError : public NumericalError {
 public:
  SingularInformationError(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Estimation aborted; the message names the failing block and cycle.
class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace moe
