#pragma once

#include <cmath>

#include "entcert/common.hpp"

namespace entcert {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline bool is_hermitian(const CMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// Eigenvalues of a Hermitian matrix, ascending.
inline RVector hermitian_eigenvalues(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const CMatrix& m) {
  return hermitian_eigenvalues(m)(0);
}

/// Square root of a Hermitian PSD matrix; eigenvalues below zero
/// (solver noise) are clipped to zero first.
inline CMatrix hermitian_sqrt(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
  RVector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

/// Re tr(a† b); the Hilbert-Schmidt inner product for Hermitian operands.
inline double real_inner(const CMatrix& a, const CMatrix& b) {
  return a.cwiseProduct(b.conjugate()).sum().real();
}

/// tr(sigma * e) for Hermitian e (so the trace is real).
inline double expectation(const CMatrix& e, const CMatrix& sigma) {
  return real_inner(e, sigma);
}

/// Partial transpose on the second tensor factor of a (da*db)x(da*db) matrix.
inline CMatrix partial_transpose_second(const CMatrix& m, int da, int db) {
  CMatrix out(m.rows(), m.cols());
  for (int a = 0; a < da; ++a)
    for (int b = 0; b < db; ++b)
      for (int ap = 0; ap < da; ++ap)
        for (int bp = 0; bp < db; ++bp)
          out(a * db + bp, ap * db + b) = m(a * db + b, ap * db + bp);
  return out;
}

/// Partial trace over the second factor of a (d*d)x(d*d) matrix.
inline CMatrix partial_trace_second(const CMatrix& m, int d) {
  CMatrix out = CMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int b = 0; b < d; ++b) out(i, j) += m(i * d + b, j * d + b);
  return out;
}

/// Reduced state of a pure vector on a d x d bipartite space, tracing out
/// the second factor: psi = sum_{i,b} A(i,b) |i>|b|>, result = A A†.
inline CMatrix reduced_state_matrix(const CVector& psi, int d) {
  Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      a(psi.data(), d, d);
  CMatrix out = a * a.adjoint();
  return out;
}

}  // namespace entcert
