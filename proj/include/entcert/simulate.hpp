#pragma once

#include <string>
#include <vector>

#include "entcert/common.hpp"
#include "entcert/linalg.hpp"
#include "entcert/qstate.hpp"
#include "entcert/rng.hpp"

namespace entcert {

/// One measurement setting: a complete POVM (usually a projective basis)
/// measured for a share of the total shots.
struct MeasurementSetting {
  std::string name;
  std::vector<CMatrix> effects;
};

struct SettingCounts {
  std::string name;
  std::vector<CMatrix> effects;
  std::vector<long long> counts;
};

namespace paulis {
inline CMatrix x() {
  CMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline CMatrix y() {
  CMatrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}
inline CMatrix z() {
  CMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
inline CVector eigvec_plus(char axis) {
  CVector v(2);
  const double s = 1.0 / std::sqrt(2.0);
  switch (axis) {
    case 'x': v << s, s; break;
    case 'y': v << s, Complex(0, s); break;
    default: v << 1, 0; break;
  }
  return v;
}
inline CVector eigvec_minus(char axis) {
  CVector v(2);
  const double s = 1.0 / std::sqrt(2.0);
  switch (axis) {
    case 'x': v << s, -s; break;
    case 'y': v << s, Complex(0, -s); break;
    default: v << 0, 1; break;
  }
  return v;
}
}  // namespace paulis

/// Product eigenbasis of σ_a ⊗ σ_a for a single axis.
inline MeasurementSetting pauli_pair_setting(char a, char b) {
  MeasurementSetting s;
  s.name = std::string(1, a) + std::string(1, b);
  const CVector va[2] = {paulis::eigvec_plus(a), paulis::eigvec_minus(a)};
  const CVector vb[2] = {paulis::eigvec_plus(b), paulis::eigvec_minus(b)};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      CVector v = kron(CMatrix(va[i]), CMatrix(vb[j])).col(0);
      s.effects.push_back(v * v.adjoint());
    }
  return s;
}

/// The three settings of the two-qubit witness experiment: eigenbases of
/// σ_x⊗σ_x, σ_y⊗σ_y and σ_z⊗σ_z.
inline std::vector<MeasurementSetting> two_qubit_three_bases() {
  return {pauli_pair_setting('x', 'x'), pauli_pair_setting('y', 'y'),
          pauli_pair_setting('z', 'z')};
}

/// All nine product-Pauli settings (tomographically complete).
inline std::vector<MeasurementSetting> two_qubit_nine_bases() {
  std::vector<MeasurementSetting> out;
  for (char a : {'x', 'y', 'z'})
    for (char b : {'x', 'y', 'z'}) out.push_back(pauli_pair_setting(a, b));
  return out;
}

/// |00> + e^{iφ}|11> (normalized); φ = 0 is the Φ+ Bell state.
inline DensityMatrix bell_phi_state(double phase, double noise = 0.0) {
  CVector v = CVector::Zero(4);
  v(0) = 1.0 / std::sqrt(2.0);
  v(3) = std::polar(1.0 / std::sqrt(2.0), phase);
  CMatrix m = (1.0 - noise) * (v * v.adjoint()) +
              noise * CMatrix::Identity(4, 4) / 4.0;
  return DensityMatrix::trusted(std::move(m));
}

/// Multinomial draw by inverse CDF, one shot at a time; deterministic
/// under a fixed stream.
inline std::vector<long long> multinomial(const std::vector<double>& probs,
                                          long long shots, Rng& rng) {
  std::vector<long long> counts(probs.size(), 0);
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += std::max(0.0, probs[i]);
    cdf[i] = acc;
  }
  for (long long s = 0; s < shots; ++s) {
    const double u = rng.uniform() * acc;
    std::size_t i = 0;
    while (i + 1 < cdf.size() && u > cdf[i]) ++i;
    ++counts[i];
  }
  return counts;
}

/// Simulated run: shots are split evenly across the settings (the first
/// settings absorb any remainder), outcomes drawn from the Born rule.
inline std::vector<SettingCounts> simulate_counts(
    const DensityMatrix& state, const std::vector<MeasurementSetting>& settings,
    long long shots, Rng& rng) {
  if (settings.empty()) throw ValidationError("no measurement settings");
  std::vector<SettingCounts> out;
  const long long per = shots / static_cast<long long>(settings.size());
  long long remainder = shots % static_cast<long long>(settings.size());
  for (const MeasurementSetting& setting : settings) {
    CMatrix sum = CMatrix::Zero(state.dim(), state.dim());
    std::vector<double> probs;
    for (const CMatrix& e : setting.effects) {
      if (e.rows() != state.dim())
        throw DimensionError("setting " + setting.name +
                             " does not match the state dimension");
      sum += e;
      probs.push_back(std::max(0.0, expectation(e, state.matrix())));
    }
    if ((sum - CMatrix::Identity(state.dim(), state.dim()))
            .cwiseAbs()
            .maxCoeff() > 1e-9)
      throw ValidationError("setting " + setting.name +
                            " is not a complete POVM");
    const long long n = per + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
    SettingCounts sc{setting.name, setting.effects, multinomial(probs, n, rng)};
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace entcert
