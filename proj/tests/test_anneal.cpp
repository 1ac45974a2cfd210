#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <entcert/anneal.hpp>
#include <entcert/simulate.hpp>

#include "test_util.hpp"

using namespace entcert;
using Catch::Approx;

namespace {

ExperimentData qubit_three_bases(long long nx0, long long nx1, long long ny0,
                                 long long ny1, long long nz0, long long nz1) {
  std::vector<std::pair<CMatrix, long long>> effects;
  const long long counts[6] = {nx0, nx1, ny0, ny1, nz0, nz1};
  int idx = 0;
  for (char axis : {'x', 'y', 'z'}) {
    for (int sgn = 0; sgn < 2; ++sgn) {
      const CVector v = sgn == 0 ? paulis::eigvec_plus(axis)
                                 : paulis::eigvec_minus(axis);
      effects.emplace_back((v * v.adjoint()) / 3.0, counts[idx++]);
    }
  }
  return ExperimentData(2, std::move(effects));
}

ExperimentData two_qubit_data(double phase, double noise, long long shots,
                              std::uint64_t seed) {
  Rng rng(seed);
  const auto settings = simulate_counts(bell_phi_state(phase, noise),
                                        two_qubit_three_bases(), shots, rng);
  std::vector<std::pair<CMatrix, long long>> effects;
  for (const auto& s : settings)
    for (std::size_t i = 0; i < s.effects.size(); ++i)
      effects.emplace_back(s.effects[i] / 3.0, s.counts[i]);
  return ExperimentData(4, std::move(effects));
}

}  // namespace

TEST_CASE("generator rotations are unitary and reduce to the identity") {
  Rng rng(3);
  const CVector psi = sample_haar_vector(4, rng);

  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) {
      const CVector same = detail::apply_generator_rotation(psi, k, l, 0.0);
      REQUIRE((same - psi).norm() < 1e-15);
    }

  for (int i = 0; i < 10000; ++i) {
    const CVector out = propose_move(psi, 0.4, rng);
    REQUIRE(std::abs(out.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("proposal indices are uniform over the index set") {
  // With D = 4 the move class is observable from the change pattern: a
  // phase-only change on the cyclic pair (a, a+1) is the diagonal move
  // k = l = a; a modulus change on {a,b} comes from one of the two
  // off-diagonal generators of that pair. Expected cell probabilities:
  // 1/16 per diagonal index, 2/16 per unordered pair.
  Rng rng(5);
  CVector psi(4);
  psi << Complex(0.5, 0.1), Complex(-0.3, 0.4), Complex(0.4, -0.2),
      Complex(0.2, 0.5);
  psi /= psi.norm();

  std::map<std::string, long long> cells;
  const int n = 10000;
  int classified = 0;
  for (int i = 0; i < n; ++i) {
    const CVector out = propose_move(psi, 0.7, rng);
    std::vector<int> modulus_changed, phase_changed;
    for (int j = 0; j < 4; ++j) {
      const double dmod = std::abs(std::abs(out(j)) - std::abs(psi(j)));
      const double dfull = std::abs(out(j) - psi(j));
      if (dmod > 1e-9)
        modulus_changed.push_back(j);
      else if (dfull > 1e-9)
        phase_changed.push_back(j);
    }
    if (modulus_changed.size() == 2 && phase_changed.empty()) {
      cells["pair" + std::to_string(modulus_changed[0]) +
            std::to_string(modulus_changed[1])]++;
      ++classified;
    } else if (modulus_changed.empty() && phase_changed.size() == 2) {
      const int a = phase_changed[0], b = phase_changed[1];
      const int diag = (b == a + 1) ? a : b;  // pair (3,0) shows as {0,3}
      cells["diag" + std::to_string(diag)]++;
      ++classified;
    }
  }
  REQUIRE(classified > n * 95 / 100);

  double chi2 = 0.0;
  int dof = 0;
  for (int a = 0; a < 4; ++a) {
    const double expected = classified / 16.0;
    const double observed =
        static_cast<double>(cells["diag" + std::to_string(a)]);
    chi2 += (observed - expected) * (observed - expected) / expected;
    ++dof;
  }
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      const double expected = classified * 2.0 / 16.0;
      const double observed = static_cast<double>(
          cells["pair" + std::to_string(a) + std::to_string(b)]);
      chi2 += (observed - expected) * (observed - expected) / expected;
      ++dof;
    }
  REQUIRE(dof == 10);
  REQUIRE(chi2 < 21.67);  // chi-square, 9 dof, 1% critical value
}

TEST_CASE("unconstrained annealing approaches the convex maximum") {
  const ExperimentData data = qubit_three_bases(35, 15, 28, 22, 45, 5);
  const double target = mle(data).log_likelihood;

  SAParams params;
  params.steps = 3000;
  params.repeats = 4;
  params.seed = 11;
  const SAResult res = sa_maximize(data, full_state_space_region(), params);

  REQUIRE(res.best_log_likelihood <= target + 1e-7);
  REQUIRE(std::abs(res.best_log_likelihood - target) <=
          0.02 * std::abs(target));
}

TEST_CASE("annealing over the alpha complement matches the convex solver") {
  const ExperimentData data = two_qubit_data(0.0, 1.0 / 42.0, 3000, 17);
  const WitnessSpec spec = WitnessSpec::linear(tu::w_phi_plus());
  const double alpha = 0.2;
  const double target = constrained_mle(data, spec, alpha).log_likelihood;

  SAParams params;
  params.steps = 4000;
  params.repeats = 4;
  params.seed = 23;
  const SAResult res =
      sa_maximize(data, gamma_alpha_complement_region(spec, alpha), params);

  REQUIRE(res.best_log_likelihood <= target + 1e-6);
  REQUIRE(std::abs(res.best_log_likelihood - target) <=
          0.05 * std::abs(target));
}

TEST_CASE("annealing is deterministic and repeats differ individually") {
  const ExperimentData data = qubit_three_bases(35, 15, 28, 22, 45, 5);
  SAParams params;
  params.steps = 500;
  params.repeats = 3;
  params.seed = 29;
  params.record_trajectory = true;

  const SAResult a = sa_maximize(data, full_state_space_region(), params);
  const SAResult b = sa_maximize(data, full_state_space_region(), params);
  REQUIRE(a.best_log_likelihood == b.best_log_likelihood);
  REQUIRE((a.best_state.matrix() - b.best_state.matrix())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  REQUIRE(a.per_repeat_values == b.per_repeat_values);

  const std::set<double> distinct(a.per_repeat_values.begin(),
                                  a.per_repeat_values.end());
  REQUIRE(distinct.size() == a.per_repeat_values.size());
  REQUIRE(a.spread >= 0.0);
  REQUIRE(a.best_log_likelihood ==
          *std::max_element(a.per_repeat_values.begin(),
                            a.per_repeat_values.end()));

  // workers only change scheduling, not results
  const SAResult c = sa_maximize(data, full_state_space_region(), params, 2);
  REQUIRE(c.best_log_likelihood == a.best_log_likelihood);
  REQUIRE(c.per_repeat_values == a.per_repeat_values);
}

TEST_CASE("trajectory recording and post-hoc membership re-checks") {
  const ExperimentData data = two_qubit_data(0.0, 1.0 / 42.0, 3000, 31);
  const WitnessSpec spec = WitnessSpec::linear(tu::w_phi_plus());
  const double delta = 0.2;

  SAParams params;
  params.steps = 800;
  params.repeats = 2;
  params.seed = 37;
  params.record_trajectory = true;
  params.record_states_every = 10;

  const SAResult res = sa_maximize(data, spec, delta, params);
  REQUIRE(res.trajectories.size() == 2);
  REQUIRE(res.visited_states.size() == 2);

  for (const auto& trace : res.trajectories) {
    REQUIRE(static_cast<int>(trace.size()) == params.steps);
    double running = -std::numeric_limits<double>::infinity();
    double prev_t = std::numeric_limits<double>::infinity();
    for (const SATracePoint& p : trace) {
      running = std::max(running, p.log_likelihood);
      REQUIRE(p.temperature < prev_t);
      prev_t = p.temperature;
    }
    REQUIRE(running <= res.best_log_likelihood + 1e-12);
  }

  // every stored visited state is outside the certified core
  for (const auto& states : res.visited_states)
    for (const CMatrix& s : states) {
      const MembershipResult r = max_fidelity_membership(s, spec, delta);
      REQUIRE(r.status != MembershipStatus::in_core);
    }
}

TEST_CASE("empty walk regions are reported") {
  const ExperimentData data = qubit_three_bases(10, 10, 10, 10, 10, 10);
  SAParams params;
  params.steps = 10;
  params.repeats = 1;
  REQUIRE_THROWS_AS(
      sa_maximize(data, [](const DensityMatrix&) { return false; }, params),
      RegionError);
}

TEST_CASE("parameter validation") {
  const ExperimentData data = qubit_three_bases(10, 10, 10, 10, 10, 10);
  SAParams bad;
  bad.steps = 0;
  REQUIRE_THROWS_AS(sa_maximize(data, full_state_space_region(), bad),
                    ValidationError);
  bad.steps = 10;
  bad.target_acceptance = 1.5;
  REQUIRE_THROWS_AS(sa_maximize(data, full_state_space_region(), bad),
                    ValidationError);
}
