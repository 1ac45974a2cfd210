#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "entcert/anneal.hpp"
#include "entcert/common.hpp"
#include "entcert/likelihood.hpp"
#include "entcert/parallel.hpp"
#include "entcert/qstate.hpp"
#include "entcert/rng.hpp"
#include "entcert/witness.hpp"

namespace entcert {

/// δ from its defining relation δ² = (2/n)[ln(2/ε) + (d²-1) ln n], taking
/// ε through its base-10 logarithm so that ε far below the double range
/// (confidences in the thousands) stays representable.
inline double delta_from_log10_epsilon(long long n, int d,
                                       double log10_epsilon) {
  if (n < 1) throw ValidationError("delta requires n >= 1");
  if (d < 2) throw DimensionError("delta requires d >= 2");
  const double ln_n = std::log(static_cast<double>(n));
  const double ln_two_over_eps = std::log(2.0) - log10_epsilon * std::log(10.0);
  const double rhs =
      2.0 / static_cast<double>(n) * (ln_two_over_eps + (double(d) * d - 1.0) * ln_n);
  return std::sqrt(std::max(0.0, rhs));
}

inline double delta(long long n, int d, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError("delta requires epsilon in (0,1)");
  return delta_from_log10_epsilon(n, d, std::log10(epsilon));
}

/// log10 of the polynomial prefactor c_{n,d} = 2 n^{(d²-1)/2}, which
/// overflows as a plain number for realistic n and d.
inline double log10_polynomial_factor(long long n, int d) {
  if (n < 1) throw ValidationError("polynomial factor requires n >= 1");
  if (d < 2) throw DimensionError("polynomial factor requires d >= 2");
  return std::log10(2.0) +
         0.5 * (double(d) * d - 1.0) * std::log10(static_cast<double>(n));
}

/// Axis-aligned integration box around the likelihood peak in Bloch
/// coordinates. Sides are capped at the state-space boundary, so the box
/// is finite; v_r is its coordinate volume and f the fraction of it
/// occupied by valid states (estimated by the MC pass, 1 until then).
struct Rectangle {
  BlochVector center;
  RVector r_minus;  // per-coordinate extent below the center
  RVector r_plus;   // per-coordinate extent above the center
  double eta = 0.0;
  double f = 1.0;

  double log_v_r() const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < r_minus.size(); ++j)
      s += std::log(r_minus(j) + r_plus(j));
    return s;
  }
  double v_r() const { return std::exp(log_v_r()); }
};

namespace detail {

struct Slice {
  const CMatrix* peak;
  const CMatrix* generator;
  double direction;
  CMatrix at(double t) const { return *peak + (direction * t) * *generator; }
};

inline double bisect_last_valid(const Slice& slice, double hi_invalid) {
  double lo = 0.0, hi = hi_invalid;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (min_eigenvalue(slice.at(mid)) >= -1e-13 ? lo : hi) = mid;
    if (hi - lo <= 1e-12) break;
  }
  return lo;
}

}  // namespace detail

/// Box construction around the likelihood maximum: per coordinate, find
/// the displacement where log L drops by ln(η) (bisection to 1e-9) and the
/// displacement where positivity fails (bisection on the minimum
/// eigenvalue); the side takes the smaller of the two, so a drop that is
/// never reached before the boundary is capped there.
inline Rectangle build_rectangle(const ExperimentData& data, double eta,
                                 const MleResult& peak) {
  if (!(eta > 1.0)) throw ValidationError("rectangle requires eta > 1");
  const int d = data.dim();
  const GeneratorBasis& basis = GeneratorBasis::get(d);
  const CMatrix& peak_m = peak.state.matrix();
  const double threshold = peak.log_likelihood - std::log(eta);
  const double hi_invalid = 2.0 * bloch_outer_radius(d) + 0.01;

  Rectangle rect;
  rect.center = to_bloch(peak.state);
  rect.eta = eta;
  rect.r_minus.resize(basis.count());
  rect.r_plus.resize(basis.count());

  for (int j = 0; j < basis.count(); ++j) {
    for (int side = 0; side < 2; ++side) {
      const detail::Slice slice{&peak_m, &basis.ops()[j],
                                side == 0 ? 1.0 : -1.0};
      const double y = detail::bisect_last_valid(slice, hi_invalid);
      double r = y;
      if (log_likelihood(data, slice.at(y)) < threshold) {
        double lo = 0.0, hi = y;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (log_likelihood(data, slice.at(mid)) >= threshold ? lo : hi) = mid;
          if (hi - lo <= 1e-9) break;
        }
        r = hi;
      }
      (side == 0 ? rect.r_plus : rect.r_minus)(j) = std::max(r, 1e-12);
    }
    if (rect.r_plus(j) + rect.r_minus(j) < 1e-12)
      throw RegionError("degenerate rectangle slice at coordinate " +
                        std::to_string(j));
  }
  return rect;
}

inline Rectangle build_rectangle(const ExperimentData& data, double eta) {
  return build_rectangle(data, eta, mle(data));
}

struct McNormalization {
  double log_value;       // ln( <L>_R · f · Π Δr ), natural log
  double standard_error;  // delta-method standard error of the log
  double f;               // valid-state fraction in the box
};

/// Monte Carlo lower bound on the likelihood normalization: uniform
/// samples in the box, invalid operators contribute zero, log-space
/// accumulation throughout. This bounds the full normalization from below
/// because the box intersected with the state space is a subset of it and
/// the likelihood is nonnegative. Chunked so results are identical for a
/// fixed seed regardless of the worker count.
inline McNormalization mc_normalization_lower_bound(const ExperimentData& data,
                                                    const Rectangle& rect,
                                                    long long n_samples,
                                                    Rng& rng,
                                                    int workers = 1) {
  if (n_samples < 1000)
    throw ValidationError("MC normalization requires at least 1000 samples");
  const int d = data.dim();
  const GeneratorBasis& basis = GeneratorBasis::get(d);
  const int n_coords = basis.count();
  const Rng session(rng.next_u64());

  const int n_chunks = static_cast<int>(std::min<long long>(64, n_samples));
  struct Chunk {
    double log_sum = kNegInf;
    double log_sum_sq = kNegInf;
    long long valid = 0;
  };
  std::vector<Chunk> chunks(n_chunks);

  parallel_for_index(n_chunks, workers, [&](int ci) {
    Rng crng = session.derive(static_cast<std::uint64_t>(ci));
    const long long begin = n_samples * ci / n_chunks;
    const long long end = n_samples * (ci + 1) / n_chunks;
    Chunk& ch = chunks[ci];
    CMatrix sigma(d, d);
    for (long long i = begin; i < end; ++i) {
      sigma = CMatrix::Identity(d, d) / static_cast<double>(d);
      for (int j = 0; j < n_coords; ++j) {
        const double tau = rect.center.tau(j) +
                           crng.uniform(-rect.r_minus(j), rect.r_plus(j));
        sigma += tau * basis.ops()[j];
      }
      if (min_eigenvalue(sigma) < 0.0) continue;
      ++ch.valid;
      const double y = log_likelihood(data, sigma);
      ch.log_sum = log_add(ch.log_sum, y);
      ch.log_sum_sq = log_add(ch.log_sum_sq, 2.0 * y);
    }
  });

  double log_sum = kNegInf, log_sum_sq = kNegInf;
  long long valid = 0;
  for (const Chunk& ch : chunks) {
    log_sum = log_add(log_sum, ch.log_sum);
    log_sum_sq = log_add(log_sum_sq, ch.log_sum_sq);
    valid += ch.valid;
  }
  if (valid == 0)
    throw RegionError("no valid states in the box; rebuild with larger eta");
  if (log_sum == kNegInf)
    throw RegionError("likelihood vanished on every valid sample");

  const double ln_n = std::log(static_cast<double>(n_samples));
  const double log_mean = log_sum - ln_n;
  const double excess = log_sum_sq - 2.0 * log_sum + ln_n;
  const double se =
      std::sqrt(std::max(0.0, std::expm1(excess)) /
                static_cast<double>(n_samples));

  McNormalization out;
  out.log_value = log_mean + rect.log_v_r();
  out.standard_error = se;
  out.f = static_cast<double>(valid) / static_cast<double>(n_samples);
  return out;
}

enum class BoundMethod { gamma_w, gamma_alpha };

inline std::string to_string(BoundMethod m) {
  return m == BoundMethod::gamma_w ? "gamma_w" : "gamma_alpha";
}

struct SolveParams {
  BoundMethod method = BoundMethod::gamma_w;
  double eta = 1e5;
  long long mc_samples = 100000;
  SAParams sa;
  std::optional<double> epsilon_log10;  // fixed-ε check instead of a solve
  int workers = 1;
};

enum class Region { detected_set, full_state_space };

inline std::string to_string(Region r) {
  return r == Region::detected_set ? "detected_set" : "full_state_space";
}

/// Everything the verification run reports. The criterion with margin,
/// log10_eps2_bound + log10_c_nd <= -C - safety_margin, holds whenever
/// region == detected_set; the trivial assignment carries C = 0.
struct ConfidenceReport {
  double confidence = 0.0;
  double epsilon_log10 = 0.0;
  double delta = 0.0;
  double log10_eps2_bound = 0.0;
  double log10_c_nd = 0.0;
  Region region = Region::full_state_space;
  BoundMethod method = BoundMethod::gamma_w;
  double mle_log_likelihood = 0.0;
  double witness_value_at_mle = 0.0;
  double mc_standard_error_log10 = 0.0;
  double sa_spread_log10 = 0.0;
  double safety_margin_log10 = 0.0;
  double rectangle_f = 0.0;
  double rectangle_log_v_r = 0.0;
  double eta = 0.0;
  long long total_counts = 0;
  int dimension = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string diagnostic;
};

namespace detail {

struct ProbeResult {
  bool feasible = false;
  double delta = 0.0;
  double log10_eps2 = 0.0;
  double sa_spread_log10 = 0.0;
  double margin_log10 = 0.0;
  std::string diagnostic;
};

struct ConfidenceEngine {
  const ExperimentData& data;
  const WitnessSpec& spec;
  const SolveParams& params;
  Rng base;
  MleResult peak;
  Rectangle rect;
  McNormalization mc;
  double log10_c;
  double log10_volume;

  ConfidenceEngine(const ExperimentData& data_, const WitnessSpec& spec_,
                   const SolveParams& params_, std::uint64_t session)
      : data(data_),
        spec(spec_),
        params(params_),
        base(session),
        peak(mle(data_)),
        rect(build_rectangle(data_, params_.eta, peak)) {
    Rng mc_rng = base.derive(1);
    mc = mc_normalization_lower_bound(data, rect, params.mc_samples, mc_rng,
                                      params.workers);
    rect.f = mc.f;
    log10_c = log10_polynomial_factor(data.total_count(), data.dim());
    log10_volume = log_hs_volume(data.dim()) / std::log(10.0);
  }

  /// ε₂ bound for a given δ < 1; the index keys the SA seed stream.
  void bound_at_delta(double delta_value, int index, ProbeResult& out) {
    double max_loglik;
    if (params.method == BoundMethod::gamma_alpha) {
      const double alpha = alpha_threshold(spec, delta_value);
      max_loglik = constrained_mle(data, spec, alpha).log_likelihood;
    } else {
      SAParams sa = params.sa;
      sa.seed = base.derive(100 + static_cast<std::uint64_t>(index)).seed();
      const SAResult res =
          sa_maximize(data, spec, delta_value, sa, params.workers);
      max_loglik = res.best_log_likelihood;
      out.sa_spread_log10 = res.spread / std::log(10.0);
    }
    out.log10_eps2 =
        (max_loglik - mc.log_value) / std::log(10.0) + log10_volume;
  }

  /// ε₂ bound and feasibility of the criterion at x = log10 ε.
  ProbeResult probe(double x, int index) {
    ProbeResult out;
    out.delta = delta_from_log10_epsilon(data.total_count(), data.dim(), x);
    if (out.delta >= 1.0) {
      // Γ̄_W is the entire state space, ε₂ = 1
      out.log10_eps2 = 0.0;
      out.margin_log10 = 10.0 * mc.standard_error / std::log(10.0);
      out.feasible = false;
      out.diagnostic = "delta >= 1";
      return out;
    }
    try {
      bound_at_delta(out.delta, index, out);
    } catch (const Error& e) {
      out.feasible = false;
      out.diagnostic = e.what();
      return out;
    }
    out.margin_log10 =
        10.0 * (mc.standard_error / std::log(10.0) + out.sa_spread_log10);
    out.feasible = out.log10_eps2 + log10_c <= x - out.margin_log10;
    return out;
  }
};

}  // namespace detail

/// Upper bound on log10 ε₂ for the given δ, via the global bound
///   ε₂ <= max_{σ∈Γ̄} L(σ) · V_D / (<L>_R · V_R),
/// with the maximum over Γ̄_α (convex solver) or Γ̄_W (annealer).
/// δ >= 1 short-circuits to 0 (the complement is the whole state space).
inline double log10_eps2_upper_bound(const ExperimentData& data,
                                     const WitnessSpec& spec, double delta,
                                     BoundMethod method, Rng& rng,
                                     const SolveParams& params = {}) {
  if (delta >= 1.0) return 0.0;
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  SolveParams p = params;
  p.method = method;
  detail::ConfidenceEngine engine(data, spec, p, rng.next_u64());
  detail::ProbeResult out;
  engine.bound_at_delta(delta, 0, out);
  return out.log10_eps2;
}

/// The confidence solve: bisection on x = log10 ε for the most negative x
/// with log10 ε₂(x) + log10 c_{n,d} <= x - margin, where the margin is ten
/// times the combined MC/SA error. The left side is nonincreasing in x and
/// the right side increases, so the crossing is unique. On success the
/// detected set is assigned with C = -x; otherwise the full state space
/// with C = 0. Solver or region failures yield the trivial assignment with
/// a diagnostic, never a silent success.
inline ConfidenceReport solve_confidence(const ExperimentData& data,
                                         const WitnessSpec& spec,
                                         const SolveParams& params, Rng& rng) {
  ConfidenceReport rep;
  rep.method = params.method;
  rep.total_counts = data.total_count();
  rep.dimension = data.dim();
  rep.eta = params.eta;
  rep.seed = rng.seed();
  rep.workers = params.workers;
  if (data.total_count() < 1) {
    rep.diagnostic = "no counts recorded";
    return rep;
  }
  if (params.method == BoundMethod::gamma_alpha &&
      spec.kind() != WitnessKind::linear)
    throw ValidationError(
        "the gamma_alpha method supports linear witnesses only");

  rep.log10_c_nd =
      log10_polynomial_factor(data.total_count(), data.dim());

  // hard lower limit on the counts: delta >= 1 even at epsilon -> 1
  const double delta_floor = delta_from_log10_epsilon(
      data.total_count(), data.dim(),
      params.epsilon_log10.value_or(-1e-9));
  if (delta_floor >= 1.0) {
    rep.delta = delta_floor;
    rep.diagnostic = "delta >= 1 for every candidate epsilon";
    return rep;
  }

  std::optional<detail::ConfidenceEngine> engine;
  try {
    engine.emplace(data, spec, params, rng.next_u64());
  } catch (const Error& e) {
    rep.diagnostic = e.what();
    return rep;
  }
  rep.mle_log_likelihood = engine->peak.log_likelihood;
  rep.witness_value_at_mle = witness_value(spec, engine->peak.state);
  rep.mc_standard_error_log10 = engine->mc.standard_error / std::log(10.0);
  rep.rectangle_f = engine->rect.f;
  rep.rectangle_log_v_r = engine->rect.log_v_r();

  const auto fill_from_probe = [&](double x, const detail::ProbeResult& p) {
    rep.epsilon_log10 = x;
    rep.confidence = -x;
    rep.delta = p.delta;
    rep.log10_eps2_bound = p.log10_eps2;
    rep.sa_spread_log10 = p.sa_spread_log10;
    rep.safety_margin_log10 = p.margin_log10;
  };

  if (params.epsilon_log10.has_value()) {
    const double x = *params.epsilon_log10;
    if (!(x < 0.0)) throw ValidationError("epsilon_log10 must be negative");
    const detail::ProbeResult p = engine->probe(x, 0);
    fill_from_probe(x, p);
    if (p.feasible) {
      rep.region = Region::detected_set;
    } else {
      rep.region = Region::full_state_space;
      rep.confidence = 0.0;
      rep.diagnostic = p.diagnostic.empty()
                           ? "criterion not satisfied at the fixed epsilon"
                           : p.diagnostic;
    }
    return rep;
  }

  const double x_hi0 = -1e-9;
  detail::ProbeResult hi_probe = engine->probe(x_hi0, 0);
  if (!hi_probe.feasible) {
    fill_from_probe(x_hi0, hi_probe);
    rep.region = Region::full_state_space;
    rep.confidence = 0.0;
    rep.diagnostic = hi_probe.diagnostic.empty()
                         ? "criterion not satisfiable for any epsilon"
                         : hi_probe.diagnostic;
    return rep;
  }

  const detail::ProbeResult half = engine->probe(std::log10(0.5), 1);
  const double x_max =
      rep.log10_c_nd + std::abs(half.log10_eps2) + 10.0;

  double lo = -x_max;        // infeasible end
  double hi = x_hi0;         // feasible end
  detail::ProbeResult best = hi_probe;
  for (int it = 0; it < 40 && hi - lo > 0.05; ++it) {
    const double mid = 0.5 * (lo + hi);
    const detail::ProbeResult p = engine->probe(mid, 2 + it);
    if (p.feasible) {
      hi = mid;
      best = p;
    } else {
      lo = mid;
    }
  }
  fill_from_probe(hi, best);
  rep.region = Region::detected_set;
  return rep;
}

}  // namespace entcert
