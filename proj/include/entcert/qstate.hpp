#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "entcert/common.hpp"
#include "entcert/linalg.hpp"
#include "entcert/rng.hpp"

namespace entcert {

/// Validated quantum state: Hermitian, unit trace, positive semidefinite
/// within tolerance. Immutable after construction.
class DensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-12;
  static constexpr double kTraceTol = 1e-12;
  static constexpr double kPsdTol = 1e-9;

  explicit DensityMatrix(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 2)
      throw DimensionError("density matrix must be square with dim >= 2");
    if (!is_hermitian(m_, kHermitianTol))
      throw ValidationError("density matrix is not Hermitian");
    if (std::abs(m_.trace().real() - 1.0) > kTraceTol ||
        std::abs(m_.trace().imag()) > kTraceTol)
      throw ValidationError("density matrix does not have unit trace");
    if (min_eigenvalue(m_) < -kPsdTol)
      throw ValidationError("density matrix is not positive semidefinite");
  }

  /// Construction without validation, for values that are PSD and unit
  /// trace by construction (partial traces, convex mixtures, ...).
  static DensityMatrix trusted(CMatrix m) { return DensityMatrix(std::move(m), 0); }

  /// Clips tiny negative eigenvalues to zero and renormalizes. Needed where
  /// a strictly valid state is required (matrix square roots).
  static DensityMatrix clipped(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
    RVector ev = es.eigenvalues().cwiseMax(0.0);
    const double tr = ev.sum();
    if (tr <= 0.0) throw ValidationError("cannot clip: no positive spectrum");
    ev /= tr;
    return trusted(es.eigenvectors() * ev.asDiagonal() *
                   es.eigenvectors().adjoint());
  }

  static DensityMatrix maximally_mixed(int d) {
    return trusted(CMatrix::Identity(d, d) / static_cast<double>(d));
  }

  static DensityMatrix pure(const CVector& psi) {
    CVector v = psi / psi.norm();
    return trusted(v * v.adjoint());
  }

  const CMatrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }
  double purity() const { return m_.squaredNorm(); }

 private:
  DensityMatrix(CMatrix m, int) : m_(std::move(m)) {}
  CMatrix m_;
};

/// Real coordinates of a state in the traceless-generator expansion.
/// Length d^2-1; not every vector corresponds to a positive state.
struct BlochVector {
  RVector tau;
  int dim;
};

/// Generalized Gell-Mann generators of SU(d), orthonormal under the
/// Hilbert-Schmidt inner product (tr λ_j λ_k = δ_jk, so tr λ_j² = 1).
/// Ordering is fixed: symmetric pairs, antisymmetric pairs, diagonal;
/// pairs in lexicographic (j,k) order. Cached per dimension.
class GeneratorBasis {
 public:
  static const GeneratorBasis& get(int d) {
    if (d < 2) throw DimensionError("generator basis requires d >= 2");
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GeneratorBasis>> cache;
    std::scoped_lock lock(mu);
    auto it = cache.find(d);
    if (it == cache.end())
      it = cache.emplace(d, std::unique_ptr<GeneratorBasis>(new GeneratorBasis(d)))
               .first;
    return *it->second;
  }

  const std::vector<CMatrix>& ops() const { return ops_; }
  int dim() const { return dim_; }
  int count() const { return static_cast<int>(ops_.size()); }

 private:
  explicit GeneratorBasis(int d) : dim_(d) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    ops_.reserve(d * d - 1);
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        CMatrix m = CMatrix::Zero(d, d);
        m(j, k) = m(k, j) = inv_sqrt2;
        ops_.push_back(std::move(m));
      }
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        CMatrix m = CMatrix::Zero(d, d);
        m(j, k) = Complex(0.0, -inv_sqrt2);
        m(k, j) = Complex(0.0, inv_sqrt2);
        ops_.push_back(std::move(m));
      }
    for (int l = 1; l < d; ++l) {
      CMatrix m = CMatrix::Zero(d, d);
      const double s = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
      for (int j = 0; j < l; ++j) m(j, j) = s;
      m(l, l) = -static_cast<double>(l) * s;
      ops_.push_back(std::move(m));
    }
  }

  int dim_;
  std::vector<CMatrix> ops_;
};

inline const GeneratorBasis& generator_basis(int d) { return GeneratorBasis::get(d); }

/// σ(τ) = 1/d + Σ τ_j λ_j. Hermitian and unit trace always; positivity is
/// not guaranteed and must be checked separately.
inline CMatrix from_bloch(const BlochVector& tau) {
  const GeneratorBasis& basis = GeneratorBasis::get(tau.dim);
  if (tau.tau.size() != basis.count())
    throw DimensionError("Bloch vector length must be d^2-1");
  CMatrix m = CMatrix::Identity(tau.dim, tau.dim) / static_cast<double>(tau.dim);
  for (int j = 0; j < basis.count(); ++j) m += tau.tau(j) * basis.ops()[j];
  return m;
}

inline BlochVector to_bloch(const CMatrix& sigma) {
  const int d = static_cast<int>(sigma.rows());
  const GeneratorBasis& basis = GeneratorBasis::get(d);
  RVector tau(basis.count());
  for (int j = 0; j < basis.count(); ++j)
    tau(j) = real_inner(basis.ops()[j], sigma);
  return BlochVector{std::move(tau), d};
}

inline BlochVector to_bloch(const DensityMatrix& sigma) {
  return to_bloch(sigma.matrix());
}

namespace detail {
inline void check_same_dim(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows())
    throw DimensionError("operands have different dimensions");
}
}  // namespace detail

/// Uhlmann fidelity F(a,b) = tr sqrt(sqrt(a) b sqrt(a)), computed by
/// eigendecomposition with negative eigenvalues clipped at zero.
inline double fidelity(const CMatrix& a, const CMatrix& b) {
  detail::check_same_dim(a, b);
  const CMatrix sa = hermitian_sqrt(a);
  RVector ev = hermitian_eigenvalues(sa * b * sa);
  double f = ev.cwiseMax(0.0).cwiseSqrt().sum();
  return f < 1.0 ? f : 1.0;
}

inline double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  return fidelity(a.matrix(), b.matrix());
}

/// Hilbert-Schmidt distance ||a-b||_2.
inline double hs_distance(const CMatrix& a, const CMatrix& b) {
  detail::check_same_dim(a, b);
  return (a - b).norm();
}

inline double hs_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return hs_distance(a.matrix(), b.matrix());
}

/// Unnormalized trace distance ||a-b||_tr (sum of absolute eigenvalues).
inline double trace_distance(const CMatrix& a, const CMatrix& b) {
  detail::check_same_dim(a, b);
  return hermitian_eigenvalues(a - b).cwiseAbs().sum();
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_distance(a.matrix(), b.matrix());
}

/// Operator norm of a Hermitian matrix: largest absolute eigenvalue.
inline double op_norm(const CMatrix& m) {
  return hermitian_eigenvalues(m).cwiseAbs().maxCoeff();
}

/// Haar-random unit vector of the given dimension.
inline CVector sample_haar_vector(int dim, Rng& rng) {
  CVector psi(dim);
  for (int i = 0; i < dim; ++i)
    psi(i) = Complex(rng.gaussian(), rng.gaussian());
  psi /= psi.norm();
  return psi;
}

/// State distributed by the Hilbert-Schmidt measure: partial trace of a
/// Haar-random pure state on a d x d bipartite space.
inline DensityMatrix sample_hs_state(int d, Rng& rng) {
  if (d < 2) throw DimensionError("sample_hs_state requires d >= 2");
  CVector psi = sample_haar_vector(d * d, rng);
  CMatrix sigma = reduced_state_matrix(psi, d);
  sigma /= sigma.trace().real();
  return DensityMatrix::trusted(std::move(sigma));
}

/// log of the Hilbert-Schmidt hyper-volume of the d-dimensional state set,
/// in the normalization tr λ_j² = 1:
///   V = sqrt(d) (2π)^{d(d-1)/2} [∏_{k=1}^{d} Γ(k)] / Γ(d²).
/// Cross-validated against MC rejection sampling in the test suite.
inline double log_hs_volume(int d) {
  if (d < 2) throw DimensionError("hs_volume requires d >= 2");
  double lg = 0.0;
  for (int k = 1; k <= d; ++k) lg += std::lgamma(static_cast<double>(k));
  return 0.5 * std::log(static_cast<double>(d)) +
         0.5 * d * (d - 1) * std::log(2.0 * M_PI) + lg -
         std::lgamma(static_cast<double>(d) * d);
}

inline double hs_volume(int d) { return std::exp(log_hs_volume(d)); }

/// Radius of the outsphere of the state set in Bloch coordinates:
/// |τ|² = tr σ² - 1/d <= (d-1)/d, with equality for pure states.
inline double bloch_outer_radius(int d) {
  return std::sqrt((d - 1.0) / d);
}

struct VolumeEstimate {
  double value;
  double standard_error;
  double fraction;  // acceptance fraction of the rejection sampler
};

/// Rejection-sampling estimate of the state-set volume: uniform Bloch
/// vectors in a bounding region (the cube for d = 2, the outsphere ball
/// otherwise), counting those that give positive operators.
inline VolumeEstimate hs_volume_mc(int d, long long samples, Rng& rng) {
  if (d < 2) throw DimensionError("volume requires d >= 2");
  if (samples < 1) throw ValidationError("need at least one sample");
  const GeneratorBasis& basis = GeneratorBasis::get(d);
  const int nb = basis.count();
  const double r_out = bloch_outer_radius(d);
  const bool use_cube = (d == 2);

  double log_region;  // volume of the bounding region
  if (use_cube) {
    log_region = nb * std::log(2.0 * r_out);
  } else {
    log_region = 0.5 * nb * std::log(M_PI) - std::lgamma(0.5 * nb + 1.0) +
                 nb * std::log(r_out);
  }
  const double region = std::exp(log_region);

  RVector tau(nb);
  long long accepted = 0;
  for (long long i = 0; i < samples; ++i) {
    if (use_cube) {
      for (int j = 0; j < nb; ++j) tau(j) = rng.uniform(-r_out, r_out);
    } else {
      for (int j = 0; j < nb; ++j) tau(j) = rng.gaussian();
      tau *= r_out * std::pow(rng.uniform(), 1.0 / nb) / tau.norm();
    }
    CMatrix sigma = CMatrix::Identity(d, d) / static_cast<double>(d);
    for (int j = 0; j < nb; ++j) sigma += tau(j) * basis.ops()[j];
    if (min_eigenvalue(sigma) >= 0.0) ++accepted;
  }
  const double p = static_cast<double>(accepted) / samples;
  VolumeEstimate out;
  out.value = p * region;
  out.standard_error = region * std::sqrt(p * (1.0 - p) / samples);
  out.fraction = p;
  return out;
}

}  // namespace entcert
