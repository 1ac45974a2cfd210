#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace entcert {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched or unsupported operand dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input violates a structural invariant (not Hermitian, not a POVM, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver exhausted its budget without meeting its tolerance.
/// Carries the best objective value seen so the caller can report it.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double best_value)
      : Error(what), best_value(best_value) {}
  double best_value;
};

/// Degenerate integration region (zero width, or no valid states found).
class RegionError : public Error {
 public:
  using Error::Error;
};

}  // namespace entcert
