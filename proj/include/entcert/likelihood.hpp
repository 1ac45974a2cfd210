#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "entcert/common.hpp"
#include "entcert/linalg.hpp"
#include "entcert/opt.hpp"
#include "entcert/qstate.hpp"
#include "entcert/witness.hpp"

namespace entcert {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Measurement record: a POVM (positive effects summing to the identity)
/// together with the observed count of each outcome.
class ExperimentData {
 public:
  static constexpr double kPsdTol = 1e-9;
  static constexpr double kCompletenessTol = 1e-9;

  ExperimentData(int dim, std::vector<std::pair<CMatrix, long long>> effects)
      : dim_(dim), effects_(std::move(effects)) {
    if (dim_ < 2) throw DimensionError("experiment dimension must be >= 2");
    CMatrix sum = CMatrix::Zero(dim_, dim_);
    for (std::size_t i = 0; i < effects_.size(); ++i) {
      const auto& [e, c] = effects_[i];
      if (e.rows() != dim_ || e.cols() != dim_)
        throw DimensionError("effect " + std::to_string(i) +
                             " has wrong dimension");
      if (!is_hermitian(e, 1e-12))
        throw ValidationError("effect " + std::to_string(i) +
                              " is not Hermitian");
      if (min_eigenvalue(e) < -kPsdTol)
        throw ValidationError("effect " + std::to_string(i) +
                              " is not positive semidefinite");
      if (c < 0)
        throw ValidationError("effect " + std::to_string(i) +
                              " has a negative count");
      if (c > 0 && e.trace().real() <= 0.0)
        throw ValidationError("effect " + std::to_string(i) +
                              " has zero trace but a positive count");
      sum += e;
      total_ += c;
    }
    const double resid =
        (sum - CMatrix::Identity(dim_, dim_)).cwiseAbs().maxCoeff();
    if (resid > kCompletenessTol)
      throw ValidationError(
          "effects do not form a POVM: completeness residual " +
          std::to_string(resid));
  }

  int dim() const { return dim_; }
  long long total_count() const { return total_; }
  const std::vector<std::pair<CMatrix, long long>>& effects() const {
    return effects_;
  }

 private:
  int dim_;
  std::vector<std::pair<CMatrix, long long>> effects_;
  long long total_ = 0;
};

/// Numerically stable log(a+b) from log a and log b, branching on the
/// larger argument. -inf operands are legal and behave as log(0).
inline double log_add(double log_a, double log_b) {
  if (log_a == kNegInf) return log_b;
  if (log_b == kNegInf) return log_a;
  if (log_a < log_b) std::swap(log_a, log_b);
  return std::log1p(std::exp(log_b - log_a)) + log_a;
}

/// log L(σ) = Σ_k count_k · ln tr(σ E_k), natural log, unnormalized
/// (no multinomial coefficient; constants cancel in every ratio used).
/// Returns -inf if some outcome with a positive count has probability <= 0.
inline double log_likelihood(const ExperimentData& data, const CMatrix& sigma) {
  if (sigma.rows() != data.dim())
    throw DimensionError("state dimension does not match experiment");
  double total = 0.0;
  for (const auto& [e, c] : data.effects()) {
    if (c == 0) continue;
    const double p = expectation(e, sigma);
    if (p <= 0.0) return kNegInf;
    total += static_cast<double>(c) * std::log(p);
  }
  return total;
}

inline double log_likelihood(const ExperimentData& data,
                             const DensityMatrix& sigma) {
  return log_likelihood(data, sigma.matrix());
}

/// Gradient of log L: Σ_k count_k / tr(σ E_k) · E_k. Only defined where
/// every counted outcome has positive probability.
inline CMatrix log_likelihood_gradient(const ExperimentData& data,
                                       const CMatrix& sigma) {
  CMatrix g = CMatrix::Zero(data.dim(), data.dim());
  for (const auto& [e, c] : data.effects()) {
    if (c == 0) continue;
    const double p = expectation(e, sigma);
    if (p <= 0.0)
      throw ValidationError("log-likelihood gradient at zero probability");
    g += (static_cast<double>(c) / p) * e;
  }
  return g;
}

struct MleResult {
  DensityMatrix state;
  double log_likelihood;
  int iterations;
};

namespace detail {
inline MleResult maximize_loglik(const ExperimentData& data, const CMatrix* w,
                                 double bound) {
  if (data.total_count() < 1)
    throw ValidationError("likelihood maximization requires n >= 1");
  const auto f = [&](const CMatrix& s) { return log_likelihood(data, s); };
  const auto grad = [&](const CMatrix& s) {
    return log_likelihood_gradient(data, s);
  };
  opt::PgResult r = opt::maximize_concave(f, grad, data.dim(), w, bound);
  if (!r.converged)
    throw SolverError("likelihood maximization did not converge (best " +
                          std::to_string(r.value) + " after " +
                          std::to_string(r.iterations) + " iterations)",
                      r.value);
  return MleResult{DensityMatrix::clipped(r.point), r.value, r.iterations};
}
}  // namespace detail

/// Maximum-likelihood state: concave maximization over the density set.
/// The maximum value is unique; the maximizer need not be.
inline MleResult mle(const ExperimentData& data) {
  return detail::maximize_loglik(data, nullptr, 0.0);
}

/// Maximum of log L over the complement of Γ_α, i.e. over density matrices
/// with tr(σW) >= -α (a convex set). Linear witnesses only.
inline MleResult constrained_mle(const ExperimentData& data,
                                 const WitnessSpec& spec, double alpha) {
  if (spec.kind() != WitnessKind::linear)
    throw ValidationError(
        "constrained likelihood maximization supports linear witnesses only");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  const CMatrix& w = spec.w();
  return detail::maximize_loglik(data, &w, -alpha);
}

}  // namespace entcert
