#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "entcert/common.hpp"
#include "entcert/likelihood.hpp"
#include "entcert/parallel.hpp"
#include "entcert/qstate.hpp"
#include "entcert/rng.hpp"
#include "entcert/witness.hpp"

namespace entcert {

struct SAParams {
  double t0 = 0.0;    // initial temperature; <= 0 selects the heuristic
                      // default (10% of the log-likelihood spread over 100
                      // feasible samples)
  double step0 = 0.2; // initial proposal scale Δ
  int steps = 4000;   // walk length N
  double target_acceptance = 0.3;
  int repeats = 5;
  std::uint64_t seed = 1;
  bool record_trajectory = false;
  int record_states_every = 0;  // > 0: store every k-th visited state
};

struct SATracePoint {
  int step;
  double temperature;
  double log_likelihood;
  bool accepted;
};

struct SAResult {
  double best_log_likelihood;
  DensityMatrix best_state;
  std::vector<double> per_repeat_values;
  double spread;           // std deviation of the per-repeat best values
  double mean_acceptance;  // over all repeats
  std::vector<std::vector<SATracePoint>> trajectories;  // when recorded
  std::vector<std::vector<CMatrix>> visited_states;     // thinned, optional
};

/// The walk region: true iff the state may be visited.
using RegionPredicate = std::function<bool(const DensityMatrix&)>;

namespace detail {

/// exp(i H_kl g) applied to psi, where H_kl is the two-index generator of
/// the move set: symmetric for k<l, antisymmetric for k>l, and the
/// diagonal |k><k| - |k+1><k+1| (cyclic) for k = l.
inline CVector apply_generator_rotation(const CVector& psi, int k, int l,
                                        double g) {
  CVector out = psi;
  if (k < l) {
    const Complex ak = psi(k), al = psi(l);
    const Complex is(0.0, std::sin(g));
    out(k) = std::cos(g) * ak + is * al;
    out(l) = is * ak + std::cos(g) * al;
  } else if (k > l) {
    const Complex ak = psi(k), al = psi(l);
    out(k) = std::cos(g) * ak + std::sin(g) * al;
    out(l) = -std::sin(g) * ak + std::cos(g) * al;
  } else {
    const int k2 = (k + 1) % static_cast<int>(psi.size());
    out(k) *= std::polar(1.0, g);
    out(k2) *= std::polar(1.0, -g);
  }
  out /= out.norm();
  return out;
}

}  // namespace detail

/// One proposal of the walk: pick indices k,l uniformly over the
/// purification dimension, draw a Gaussian distance with deviation `step`,
/// and rotate. Unitary, so the output stays normalized.
inline CVector propose_move(const CVector& psi, double step, Rng& rng) {
  const int dim = static_cast<int>(psi.size());
  const int k = static_cast<int>(rng.uniform_int(0, dim - 1));
  const int l = static_cast<int>(rng.uniform_int(0, dim - 1));
  const double g = step * rng.gaussian();
  return detail::apply_generator_rotation(psi, k, l, g);
}

/// Region builders. The Γ̄_W oracle treats a state whose membership cannot
/// be certified either way (possible only in a numerically thin band
/// around the Γ_W boundary) as feasible; that can only enlarge the walked
/// region and hence the reported maximum, which keeps the ε₂ bound valid.
inline RegionPredicate gamma_w_complement_region(
    const WitnessSpec& spec, double delta, const MembershipOptions& opts = {}) {
  return [spec, delta, opts](const DensityMatrix& s) {
    const MembershipResult r =
        max_fidelity_membership(s.matrix(), spec, delta, opts);
    return r.status != MembershipStatus::in_core;
  };
}

inline RegionPredicate gamma_alpha_complement_region(const WitnessSpec& spec,
                                                     double alpha) {
  CMatrix w = spec.w();
  return [w, alpha](const DensityMatrix& s) {
    return real_inner(w, s.matrix()) >= -alpha;
  };
}

inline RegionPredicate full_state_space_region() {
  return [](const DensityMatrix&) { return true; };
}

/// Simulated-annealing maximization of log L over a black-box region.
/// Walks in purification space; proposals leaving the region are
/// discarded; downhill moves are accepted with bias exp(-|Δlog L|/T);
/// T cools as T0/s; Δ adapts every 50 steps toward the target acceptance
/// ratio. Repeats run independently (in parallel when workers > 1) and the
/// spread of their best values estimates the numerical error.
inline SAResult sa_maximize(const ExperimentData& data,
                            const RegionPredicate& region,
                            const SAParams& params, int workers = 1) {
  if (params.steps < 1 || params.repeats < 1)
    throw ValidationError("SA requires steps >= 1 and repeats >= 1");
  if (!(params.target_acceptance > 0.0 && params.target_acceptance < 1.0))
    throw ValidationError("SA target acceptance must lie in (0,1)");
  const int d = data.dim();
  const Rng base(params.seed);

  const auto feasible_start = [&](Rng& rng) {
    for (int tries = 0; tries < 500; ++tries) {
      CVector psi = sample_haar_vector(d * d, rng);
      DensityMatrix s =
          DensityMatrix::trusted(reduced_state_matrix(psi, d));
      if (region(s)) return psi;
    }
    throw RegionError(
        "no feasible starting state found; the walk region looks empty");
  };

  double t0 = params.t0;
  if (!(t0 > 0.0)) {
    Rng trng = base.derive(0x7e30ull);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
      const CVector psi = feasible_start(trng);
      const double v = log_likelihood(
          data, reduced_state_matrix(psi, d));
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    t0 = (std::isfinite(lo) && hi > lo) ? 0.1 * (hi - lo) : 1.0;
  }

  struct RepeatOut {
    double best;
    CMatrix best_state;
    double acceptance;
    std::vector<SATracePoint> trace;
    std::vector<CMatrix> states;
  };
  std::vector<RepeatOut> outs(params.repeats);

  parallel_for_index(params.repeats, workers, [&](int rep) {
    Rng rng = base.derive(1000 + static_cast<std::uint64_t>(rep));
    CVector psi = feasible_start(rng);
    CMatrix sigma = reduced_state_matrix(psi, d);
    double cur = log_likelihood(data, sigma);
    double best = cur;
    CMatrix best_state = sigma;
    double step = params.step0;
    long long accepted = 0;
    int window_accepts = 0;
    RepeatOut& out = outs[rep];
    if (params.record_trajectory) out.trace.reserve(params.steps);

    for (int s = 1; s <= params.steps; ++s) {
      const double temperature = t0 / s;
      CVector prop;
      CMatrix prop_sigma;
      bool have_proposal = false;
      for (int attempt = 0; attempt < 50; ++attempt) {
        prop = propose_move(psi, step, rng);
        prop_sigma = reduced_state_matrix(prop, d);
        if (region(DensityMatrix::trusted(prop_sigma))) {
          have_proposal = true;
          break;
        }
      }
      bool accept = false;
      if (have_proposal) {
        const double val = log_likelihood(data, prop_sigma);
        const double ratio = val - cur;
        if (ratio > 0.0) {
          accept = true;
        } else {
          const double bias = std::exp(ratio / temperature);  // e^{-|Δ|/T}
          accept = rng.uniform() < bias;
        }
        if (accept) {
          psi = std::move(prop);
          sigma = std::move(prop_sigma);
          cur = val;
          ++accepted;
          ++window_accepts;
          if (cur > best) {
            best = cur;
            best_state = sigma;
          }
        }
      }
      if (params.record_trajectory)
        out.trace.push_back({s, temperature, cur, accept});
      if (params.record_states_every > 0 &&
          s % params.record_states_every == 0)
        out.states.push_back(sigma);
      if (s % 50 == 0) {
        const double ratio = window_accepts / 50.0;
        step *= (ratio > params.target_acceptance) ? 1.1 : 1.0 / 1.1;
        step = std::clamp(step, 1e-8, 10.0);
        window_accepts = 0;
      }
    }
    out.best = best;
    out.best_state = std::move(best_state);
    out.acceptance = static_cast<double>(accepted) / params.steps;
  });

  SAResult res{outs[0].best, DensityMatrix::trusted(outs[0].best_state),
               {}, 0.0, 0.0, {}, {}};
  double mean_acc = 0.0;
  for (const auto& o : outs) {
    res.per_repeat_values.push_back(o.best);
    mean_acc += o.acceptance;
    if (o.best > res.best_log_likelihood) {
      res.best_log_likelihood = o.best;
      res.best_state = DensityMatrix::trusted(o.best_state);
    }
    if (params.record_trajectory) res.trajectories.push_back(o.trace);
    if (params.record_states_every > 0) res.visited_states.push_back(o.states);
  }
  res.mean_acceptance = mean_acc / params.repeats;
  if (params.repeats > 1) {
    double m = 0.0;
    for (double v : res.per_repeat_values) m += v;
    m /= res.per_repeat_values.size();
    double var = 0.0;
    for (double v : res.per_repeat_values) var += (v - m) * (v - m);
    res.spread = std::sqrt(var / res.per_repeat_values.size());
  }
  if (!region(res.best_state))
    throw SolverError("SA best state failed the final membership re-check",
                      res.best_log_likelihood);
  return res;
}

/// Convenience form walking the complement of Γ_W for the given witness
/// and enlargement parameter. The final best state is re-verified: a
/// certified in-core verdict propagates as an error. An unresolved
/// verdict is accepted — the maximizer sits on the Γ_W boundary (which
/// belongs to the closed complement) whenever the walk has converged, and
/// there the bounds cannot separate within the solver tolerance.
inline SAResult sa_maximize(const ExperimentData& data,
                            const WitnessSpec& spec, double delta,
                            const SAParams& params, int workers = 1) {
  if (!(delta > 0.0 && delta < 1.0))
    throw ValidationError("sa_maximize requires 0 < delta < 1");
  SAResult res = sa_maximize(data, gamma_w_complement_region(spec, delta),
                             params, workers);
  const MembershipResult check =
      max_fidelity_membership(res.best_state.matrix(), spec, delta);
  if (check.status == MembershipStatus::in_core)
    throw SolverError("SA best state certified inside Γ_W",
                      res.best_log_likelihood);
  return res;
}

}  // namespace entcert
