#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "entcert/common.hpp"
#include "entcert/likelihood.hpp"
#include "entcert/regions.hpp"
#include "entcert/simulate.hpp"
#include "entcert/witness.hpp"

namespace entcert {

using Json = nlohmann::ordered_json;

/// Parse failure with the JSON-pointer path of the offending element.
class ParseError : public Error {
 public:
  ParseError(const std::string& pointer, const std::string& message)
      : Error(message + " (at " + pointer + ")"), pointer(pointer) {}
  std::string pointer;
};

namespace jio {

inline const Json& require(const Json& j, const char* key,
                           const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(path + "/" + key, "missing required field");
  return j.at(key);
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

inline long long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<long long>();
}

inline std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

inline Complex complex_entry(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(path, "expected a [re, im] pair");
  return Complex(j[0].get<double>(), j[1].get<double>());
}

/// Row-major nested arrays of [re, im] pairs.
inline CMatrix matrix(const Json& j, const std::string& path,
                      int expected_dim = -1) {
  if (!j.is_array() || j.empty())
    throw ParseError(path, "expected a non-empty matrix");
  const int rows = static_cast<int>(j.size());
  if (expected_dim > 0 && rows != expected_dim)
    throw ParseError(path, "matrix has " + std::to_string(rows) +
                               " rows, expected " +
                               std::to_string(expected_dim));
  CMatrix m(rows, rows);
  for (int r = 0; r < rows; ++r) {
    const Json& row = j[r];
    const std::string rpath = path + "/" + std::to_string(r);
    if (!row.is_array() || static_cast<int>(row.size()) != rows)
      throw ParseError(rpath, "matrix row has wrong length");
    for (int c = 0; c < rows; ++c)
      m(r, c) = complex_entry(row[c], rpath + "/" + std::to_string(c));
  }
  return m;
}

inline CVector cvector(const Json& j, const std::string& path,
                       int expected_dim = -1) {
  if (!j.is_array() || j.empty())
    throw ParseError(path, "expected a non-empty vector");
  if (expected_dim > 0 && static_cast<int>(j.size()) != expected_dim)
    throw ParseError(path, "vector has wrong length");
  CVector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) =
        complex_entry(j[i], path + "/" + std::to_string(i));
  return v;
}

inline Json dump(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json dump(const CVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out.push_back(Json::array({v(i).real(), v(i).imag()}));
  return out;
}

}  // namespace jio

/// On-disk experiment: measurement settings with counts, the witness, and
/// the analysis parameters. Settings hold raw per-setting POVMs; flat
/// effect lists (a single POVM summing to the identity) load as one
/// setting.
struct ExperimentFile {
  int dimension = 0;
  std::vector<SettingCounts> settings;
  std::optional<WitnessSpec> witness;
  SolveParams params;
  std::uint64_t seed = 1;
};

/// Flattens the settings into one POVM: each setting's effects are scaled
/// by 1/(number of settings), which adds a constant to log L that cancels
/// in every ratio used by the criterion.
inline ExperimentData to_experiment_data(const ExperimentFile& file) {
  std::vector<std::pair<CMatrix, long long>> effects;
  const double scale = 1.0 / static_cast<double>(file.settings.size());
  for (const SettingCounts& s : file.settings) {
    if (s.effects.size() != s.counts.size())
      throw ValidationError("setting " + s.name +
                            ": effects/counts length mismatch");
    for (std::size_t i = 0; i < s.effects.size(); ++i)
      effects.emplace_back(scale * s.effects[i], s.counts[i]);
  }
  return ExperimentData(file.dimension, std::move(effects));
}

inline WitnessSpec witness_from_json(const Json& j, const std::string& path,
                                     int dim) {
  const std::string kind = jio::text(jio::require(j, "kind", path), path + "/kind");
  const CMatrix w = jio::matrix(jio::require(j, "W", path), path + "/W", dim);
  if (kind == "linear") return WitnessSpec::linear(w);
  if (kind == "accessible_nonlinear") {
    const CMatrix u = jio::matrix(jio::require(j, "U", path), path + "/U", dim);
    CVector ref;
    if (j.contains("reference_state"))
      ref = jio::cvector(j.at("reference_state"), path + "/reference_state", dim);
    try {
      return WitnessSpec::accessible_nonlinear(w, u, ref);
    } catch (const Error& e) {
      throw ParseError(path, e.what());
    }
  }
  throw ParseError(path + "/kind", "unknown witness kind '" + kind + "'");
}

inline Json witness_to_json(const WitnessSpec& spec) {
  Json j;
  j["kind"] = spec.kind() == WitnessKind::linear ? "linear"
                                                 : "accessible_nonlinear";
  j["W"] = jio::dump(spec.w());
  if (spec.kind() == WitnessKind::accessible_nonlinear) {
    j["U"] = jio::dump(spec.u());
    j["reference_state"] = jio::dump(spec.reference_state());
  }
  return j;
}

inline ExperimentFile experiment_from_json(const Json& j) {
  ExperimentFile file;
  file.dimension = static_cast<int>(
      jio::integer(jio::require(j, "dimension", ""), "/dimension"));
  if (file.dimension < 2)
    throw ParseError("/dimension", "dimension must be >= 2");

  const auto parse_setting = [&](const Json& js, const std::string& path) {
    SettingCounts sc;
    sc.name = js.contains("name") ? jio::text(js.at("name"), path + "/name")
                                  : std::string("setting");
    const Json& effects = jio::require(js, "effects", path);
    const Json& counts = jio::require(js, "counts", path);
    if (!effects.is_array() || effects.empty())
      throw ParseError(path + "/effects", "expected a non-empty array");
    if (!counts.is_array() || counts.size() != effects.size())
      throw ParseError(path + "/counts",
                       "counts must match the effects in length");
    for (std::size_t i = 0; i < effects.size(); ++i) {
      sc.effects.push_back(jio::matrix(
          effects[i], path + "/effects/" + std::to_string(i), file.dimension));
      const long long c =
          jio::integer(counts[i], path + "/counts/" + std::to_string(i));
      if (c < 0)
        throw ParseError(path + "/counts/" + std::to_string(i),
                         "counts must be nonnegative");
      sc.counts.push_back(c);
    }
    return sc;
  };

  if (j.contains("settings")) {
    const Json& settings = j.at("settings");
    if (!settings.is_array() || settings.empty())
      throw ParseError("/settings", "expected a non-empty array");
    for (std::size_t i = 0; i < settings.size(); ++i)
      file.settings.push_back(
          parse_setting(settings[i], "/settings/" + std::to_string(i)));
  } else if (j.contains("effects")) {
    Json wrapper;
    wrapper["name"] = "povm";
    wrapper["effects"] = j.at("effects");
    wrapper["counts"] = jio::require(j, "counts", "");
    file.settings.push_back(parse_setting(wrapper, ""));
  } else {
    throw ParseError("/settings", "missing required field");
  }

  if (j.contains("witness"))
    file.witness = witness_from_json(j.at("witness"), "/witness", file.dimension);

  if (j.contains("params")) {
    const Json& p = j.at("params");
    const std::string path = "/params";
    if (p.contains("method")) {
      const std::string m = jio::text(p.at("method"), path + "/method");
      if (m == "gamma_w") file.params.method = BoundMethod::gamma_w;
      else if (m == "gamma_alpha") file.params.method = BoundMethod::gamma_alpha;
      else throw ParseError(path + "/method", "unknown method '" + m + "'");
    }
    if (p.contains("eta"))
      file.params.eta = jio::number(p.at("eta"), path + "/eta");
    if (p.contains("mc_samples"))
      file.params.mc_samples =
          jio::integer(p.at("mc_samples"), path + "/mc_samples");
    if (p.contains("epsilon_log10"))
      file.params.epsilon_log10 =
          jio::number(p.at("epsilon_log10"), path + "/epsilon_log10");
    if (p.contains("seed"))
      file.seed = static_cast<std::uint64_t>(
          jio::integer(p.at("seed"), path + "/seed"));
    if (p.contains("sa")) {
      const Json& sa = p.at("sa");
      const std::string spath = path + "/sa";
      if (sa.contains("t0"))
        file.params.sa.t0 = jio::number(sa.at("t0"), spath + "/t0");
      if (sa.contains("step0"))
        file.params.sa.step0 = jio::number(sa.at("step0"), spath + "/step0");
      if (sa.contains("steps"))
        file.params.sa.steps = static_cast<int>(
            jio::integer(sa.at("steps"), spath + "/steps"));
      if (sa.contains("target_acceptance"))
        file.params.sa.target_acceptance =
            jio::number(sa.at("target_acceptance"), spath + "/target_acceptance");
      if (sa.contains("repeats"))
        file.params.sa.repeats = static_cast<int>(
            jio::integer(sa.at("repeats"), spath + "/repeats"));
    }
  }
  return file;
}

inline Json experiment_to_json(const ExperimentFile& file) {
  Json j;
  j["dimension"] = file.dimension;
  Json settings = Json::array();
  for (const SettingCounts& s : file.settings) {
    Json js;
    js["name"] = s.name;
    Json effects = Json::array();
    for (const CMatrix& e : s.effects) effects.push_back(jio::dump(e));
    js["effects"] = std::move(effects);
    js["counts"] = s.counts;
    settings.push_back(std::move(js));
  }
  j["settings"] = std::move(settings);
  if (file.witness) j["witness"] = witness_to_json(*file.witness);
  Json p;
  p["method"] = to_string(file.params.method);
  p["eta"] = file.params.eta;
  p["mc_samples"] = file.params.mc_samples;
  if (file.params.epsilon_log10)
    p["epsilon_log10"] = *file.params.epsilon_log10;
  p["seed"] = file.seed;
  Json sa;
  sa["t0"] = file.params.sa.t0;
  sa["step0"] = file.params.sa.step0;
  sa["steps"] = file.params.sa.steps;
  sa["target_acceptance"] = file.params.sa.target_acceptance;
  sa["repeats"] = file.params.sa.repeats;
  p["sa"] = std::move(sa);
  j["params"] = std::move(p);
  return j;
}

inline Json report_to_json(const ConfidenceReport& rep) {
  Json j;
  j["confidence"] = rep.confidence;
  j["epsilon_log10"] = rep.epsilon_log10;
  j["epsilon"] = std::pow(10.0, rep.epsilon_log10);  // 0 when underflowed
  j["region"] = to_string(rep.region);
  j["method"] = to_string(rep.method);
  j["delta"] = rep.delta;
  j["log10_eps2_bound"] = rep.log10_eps2_bound;
  j["log10_c_nd"] = rep.log10_c_nd;
  j["mle_log_likelihood"] = rep.mle_log_likelihood;
  j["witness_value_at_mle"] = rep.witness_value_at_mle;
  j["mc_standard_error_log10"] = rep.mc_standard_error_log10;
  j["sa_spread_log10"] = rep.sa_spread_log10;
  j["safety_margin_log10"] = rep.safety_margin_log10;
  j["rectangle_f"] = rep.rectangle_f;
  j["rectangle_log_v_r"] = rep.rectangle_log_v_r;
  j["eta"] = rep.eta;
  j["total_counts"] = rep.total_counts;
  j["dimension"] = rep.dimension;
  j["seed"] = rep.seed;
  j["workers"] = rep.workers;
  if (!rep.diagnostic.empty()) j["diagnostic"] = rep.diagnostic;
  return j;
}

}  // namespace entcert
