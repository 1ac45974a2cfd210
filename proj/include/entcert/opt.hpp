#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "entcert/common.hpp"
#include "entcert/linalg.hpp"

namespace entcert::opt {

/// Euclidean projection of v onto the probability simplex.
inline RVector simplex_projection(const RVector& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cssv = 0.0, theta = 0.0;
  int rho = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cssv += u[i];
    const double t = (cssv - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = static_cast<int>(i) + 1;
      theta = t;
    }
  }
  (void)rho;
  return (v.array() - theta).cwiseMax(0.0);
}

/// Frobenius projection onto {X Hermitian, X >= 0, tr X = 1}: project the
/// eigenvalues of the Hermitian part onto the simplex.
inline CMatrix project_density(const CMatrix& m) {
  const CMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  RVector ev = simplex_projection(es.eigenvalues());
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

/// Frobenius projection onto the halfspace {X : Re tr(X w) >= bound}.
inline CMatrix project_halfspace(const CMatrix& m, const CMatrix& w,
                                 double bound) {
  const double val = real_inner(w, m);
  if (val >= bound) return m;
  return m + ((bound - val) / w.squaredNorm()) * w;
}

/// Dykstra alternating projection onto density-set ∩ halfspace.
inline CMatrix project_density_halfspace(const CMatrix& m, const CMatrix& w,
                                         double bound) {
  CMatrix x = m;
  CMatrix p = CMatrix::Zero(m.rows(), m.cols());
  CMatrix q = CMatrix::Zero(m.rows(), m.cols());
  CMatrix y = x;
  for (int it = 0; it < 2000; ++it) {
    y = project_density(x + p);
    p = x + p - y;
    CMatrix x_next = project_halfspace(y + q, w, bound);
    q = y + q - x_next;
    const double change = (x_next - x).norm();
    x = std::move(x_next);
    if (change < 1e-13 && real_inner(w, y) >= bound - 1e-11) break;
  }
  return y;  // exactly a density matrix; halfspace within Dykstra tolerance
}

struct PgOptions {
  double grad_tol = 1e-8;       // unit-step projected-gradient residual
  double stall_tol = 1e-12;     // objective improvement threshold
  int stall_window = 50;        // iterations without improvement to stop
  int max_iters = 20000;
  const CMatrix* start = nullptr;  // default: maximally mixed
};

struct PgResult {
  CMatrix point;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
};

/// Projected-gradient ascent of a concave objective over the density set,
/// optionally intersected with one halfspace {Re tr(σw) >= bound}.
/// Barzilai-Borwein steps with a descent-lemma backtracking safeguard.
/// Terminates on the unit-step projected-gradient residual, or when the
/// objective stalls for stall_window iterations.
template <class F, class G>
PgResult maximize_concave(F&& f, G&& grad, int dim, const CMatrix* w,
                          double bound, const PgOptions& opts = {}) {
  const auto project = [&](const CMatrix& m) {
    return w ? project_density_halfspace(m, *w, bound) : project_density(m);
  };

  CMatrix x = project(opts.start ? *opts.start
                                 : CMatrix::Identity(dim, dim) /
                                       static_cast<double>(dim));
  double fx = f(x);
  CMatrix g = grad(x);
  double t = 1.0 / std::max(1.0, g.norm());

  PgResult res;
  res.point = x;
  res.value = fx;
  double best = fx;
  int since_improvement = 0;

  for (int k = 0; k < opts.max_iters; ++k) {
    res.iterations = k + 1;

    const CMatrix probe = project(x + g);
    res.residual = (x - probe).norm();
    if (res.residual <= opts.grad_tol) {
      res.converged = true;
      break;
    }

    // backtracking line search on the proximal upper model
    CMatrix xn;
    double fn = -std::numeric_limits<double>::infinity();
    double tl = t;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = project(x + tl * g);
      const CMatrix d = xn - x;
      fn = f(xn);
      if (std::isfinite(fn) &&
          fn >= fx + real_inner(g, d) - 0.5 / tl * d.squaredNorm() - 1e-300) {
        moved = true;
        break;
      }
      tl *= 0.5;
      if (tl < 1e-18) break;
    }
    if (!moved) {
      res.converged = true;  // no ascent direction left at fp resolution
      break;
    }

    const CMatrix gn = grad(xn);
    const CMatrix s = xn - x;
    const CMatrix y = gn - g;
    const double sy = -real_inner(s, y);
    t = (sy > 1e-300) ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e8) : tl * 2.0;

    x = std::move(xn);
    fx = fn;
    g = gn;

    if (fx > res.value) {
      res.value = fx;
      res.point = x;
    }
    if (fx > best + opts.stall_tol) {
      best = fx;
      since_improvement = 0;
    } else if (++since_improvement >= opts.stall_window) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct LinearMaxResult {
  double value;   // maximum of Re tr(G σ), also a valid dual certificate
  CMatrix point;  // rank-one maximizer
};

namespace detail {
inline std::pair<double, CVector> top_eig(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
  const Eigen::Index last = m.rows() - 1;
  return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}
}  // namespace detail

/// Maximization of the linear functional Re tr(Gσ) over the density set:
/// the top eigenpair of G.
inline LinearMaxResult linear_max_density(const CMatrix& g) {
  auto [val, vec] = detail::top_eig(g);
  CMatrix pt = vec * vec.adjoint();
  return {val, std::move(pt)};
}

}  // namespace entcert::opt
