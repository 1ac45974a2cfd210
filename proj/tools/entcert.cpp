// Command-line front end: verify / simulate / volume / contour.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "entcert/anneal.hpp"
#include "entcert/io.hpp"
#include "entcert/parallel.hpp"
#include "entcert/regions.hpp"
#include "entcert/simulate.hpp"

namespace {

using namespace entcert;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file " + path);
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

struct VerifyArgs {
  std::string input;
  std::string out;
  std::string sa_trace;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string method;
  double eta = 0.0;
  long long mc_samples = 0;
  int sa_steps = 0;
  int sa_repeats = 0;
  double epsilon_log10 = 0.0;
  bool has_seed = false, has_workers = false, has_eta = false,
       has_mc = false, has_steps = false, has_repeats = false,
       has_epsilon = false;
};

int run_verify(const VerifyArgs& args) {
  std::ifstream in(args.input);
  if (!in) {
    std::cerr << "error: cannot open " << args.input << "\n";
    return 1;
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    std::cerr << "error: " << args.input << ": " << e.what() << "\n";
    return 1;
  }
  ExperimentFile file = experiment_from_json(j);
  if (!file.witness) throw Error("experiment file carries no witness");

  if (args.has_seed) file.seed = args.seed;
  if (args.has_eta) file.params.eta = args.eta;
  if (args.has_mc) file.params.mc_samples = args.mc_samples;
  if (args.has_steps) file.params.sa.steps = args.sa_steps;
  if (args.has_repeats) file.params.sa.repeats = args.sa_repeats;
  if (args.has_epsilon) file.params.epsilon_log10 = args.epsilon_log10;
  if (!args.method.empty())
    file.params.method = args.method == "gamma-alpha" ? BoundMethod::gamma_alpha
                                                      : BoundMethod::gamma_w;
  file.params.workers = args.has_workers ? args.workers : default_workers();

  const ExperimentData data = to_experiment_data(file);
  Rng rng(file.seed);
  const ConfidenceReport rep =
      solve_confidence(data, *file.witness, file.params, rng);
  write_text(args.out, report_to_json(rep).dump(2));

  if (!args.sa_trace.empty() && rep.delta > 0.0 && rep.delta < 1.0) {
    SAParams sa = file.params.sa;
    sa.seed = Rng(file.seed).derive(0xacedull).seed();
    sa.record_trajectory = true;
    const SAResult res = sa_maximize(data, *file.witness, rep.delta, sa,
                                     file.params.workers);
    std::ofstream csv(args.sa_trace, std::ios::binary);
    if (!csv) throw Error("cannot open " + args.sa_trace);
    csv << "repeat,step,temperature,log_likelihood,accepted\n";
    for (std::size_t r = 0; r < res.trajectories.size(); ++r)
      for (const SATracePoint& p : res.trajectories[r])
        csv << r << ',' << p.step << ',' << p.temperature << ','
            << p.log_likelihood << ',' << (p.accepted ? 1 : 0) << '\n';
  }
  return rep.region == Region::detected_set ? 0 : 2;
}

int run_simulate(double phase, double noise, const std::string& settings_name,
                 long long shots, std::uint64_t seed,
                 const std::string& witness_kind, const std::string& method,
                 const std::string& out) {
  const DensityMatrix target = bell_phi_state(phase, noise);
  const DensityMatrix pure_target = bell_phi_state(phase, 0.0);
  std::vector<MeasurementSetting> settings =
      settings_name == "nine-bases" ? two_qubit_nine_bases()
                                    : two_qubit_three_bases();
  Rng rng(seed);
  ExperimentFile file;
  file.dimension = 4;
  file.settings = simulate_counts(target, settings, shots, rng);
  const CMatrix w =
      0.5 * CMatrix::Identity(4, 4) - pure_target.matrix();
  if (witness_kind == "nonlinear") {
    const CMatrix u = kron(paulis::z(), paulis::z());
    file.witness = WitnessSpec::accessible_nonlinear(w, u);
  } else {
    file.witness = WitnessSpec::linear(w);
  }
  file.params.method =
      method == "gamma-alpha" ? BoundMethod::gamma_alpha : BoundMethod::gamma_w;
  file.seed = seed;
  write_text(out, experiment_to_json(file).dump(2));
  return 0;
}

int run_volume(int d, long long mc_samples, std::uint64_t seed) {
  const double closed = hs_volume(d);
  std::cout << "closed_form " << std::setprecision(12) << closed << "\n";
  if (mc_samples > 0) {
    Rng rng(seed);
    const VolumeEstimate est = hs_volume_mc(d, mc_samples, rng);
    std::cout << "mc_estimate " << est.value << "\n"
              << "mc_standard_error " << est.standard_error << "\n"
              << "relative_deviation " << (est.value - closed) / closed
              << "\n";
  }
  return 0;
}

int run_contour(int d, long long n_min, long long n_max, int n_steps,
                double c_min, double c_max, int c_steps,
                const std::string& out) {
  if (n_min < 1 || n_max < n_min || n_steps < 1 || c_steps < 1 ||
      c_max < c_min)
    throw ValidationError("empty contour range");
  std::ostringstream csv;
  csv << "n,confidence,delta,delta_gt_1\n";
  for (int i = 0; i < n_steps; ++i) {
    const double fn =
        n_steps == 1 ? static_cast<double>(n_min)
                     : std::exp(std::log(double(n_min)) +
                                (std::log(double(n_max)) -
                                 std::log(double(n_min))) *
                                    i / (n_steps - 1));
    const long long n = std::max<long long>(1, std::llround(fn));
    for (int k = 0; k < c_steps; ++k) {
      const double c =
          c_steps == 1 ? c_min : c_min + (c_max - c_min) * k / (c_steps - 1);
      const double del = delta_from_log10_epsilon(n, d, -c);
      csv << n << ',' << c << ',' << std::setprecision(12) << del << ','
          << (del > 1.0 ? 1 : 0) << '\n';
    }
  }
  write_text(out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "entcert: confidence levels for entanglement verification from finite "
      "measurement data"};
  app.require_subcommand(1);

  VerifyArgs vargs;
  CLI::App* verify =
      app.add_subcommand("verify", "Assign a confidence region to a recorded "
                                   "experiment and report the confidence");
  verify->add_option("input", vargs.input, "experiment JSON file")->required();
  verify->add_option("--out", vargs.out, "report destination (default stdout)");
  verify->add_option("--sa-trace", vargs.sa_trace,
                     "dump annealer trajectories to this CSV");
  auto* o_seed = verify->add_option("--seed", vargs.seed, "override the seed");
  auto* o_workers =
      verify->add_option("--workers", vargs.workers, "worker threads");
  verify->add_option("--method", vargs.method, "bound method")
      ->check(CLI::IsMember({"gamma-w", "gamma-alpha"}));
  auto* o_eta = verify->add_option("--eta", vargs.eta, "likelihood drop factor");
  auto* o_mc =
      verify->add_option("--mc-samples", vargs.mc_samples, "MC sample count");
  auto* o_steps =
      verify->add_option("--sa-steps", vargs.sa_steps, "annealer walk length");
  auto* o_repeats = verify->add_option("--sa-repeats", vargs.sa_repeats,
                                       "independent annealer repeats");
  auto* o_eps = verify->add_option(
      "--epsilon-log10", vargs.epsilon_log10,
      "check one fixed log10(epsilon) instead of solving for the best");

  double phase = 0.0, noise = 0.0;
  std::string settings_name = "three-bases";
  long long shots = 60000;
  std::uint64_t sim_seed = 1;
  std::string witness_kind = "linear", sim_method = "gamma-w", sim_out;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Generate a synthetic two-qubit experiment file");
  simulate->add_option("--phase", phase,
                       "phase of the target (|00>+e^{i phase}|11>)/sqrt(2)");
  simulate->add_option("--noise", noise, "white-noise admixture in [0,1)")
      ->check(CLI::Range(0.0, 0.999999));
  simulate->add_option("--settings", settings_name, "measurement settings")
      ->check(CLI::IsMember({"three-bases", "nine-bases"}));
  simulate->add_option("--shots", shots, "total number of counts");
  simulate->add_option("--seed", sim_seed, "sampling seed");
  simulate->add_option("--witness", witness_kind, "witness kind")
      ->check(CLI::IsMember({"linear", "nonlinear"}));
  simulate->add_option("--method", sim_method, "bound method for the file")
      ->check(CLI::IsMember({"gamma-w", "gamma-alpha"}));
  simulate->add_option("--out", sim_out, "destination (default stdout)");

  int vol_d = 2;
  long long vol_mc = 0;
  std::uint64_t vol_seed = 1;
  CLI::App* volume = app.add_subcommand(
      "volume", "Print the state-space hyper-volume (closed form, and a "
                "Monte Carlo cross-check when --mc-samples is given)");
  volume->add_option("-d,--dimension", vol_d, "Hilbert dimension")->required();
  volume->add_option("--mc-samples", vol_mc, "rejection samples");
  volume->add_option("--seed", vol_seed, "sampling seed");

  int con_d = 2, con_nsteps = 30, con_csteps = 30;
  long long con_nmin = 10, con_nmax = 1000000;
  double con_cmin = 1.0, con_cmax = 100.0;
  std::string con_out;
  CLI::App* contour = app.add_subcommand(
      "contour", "CSV grid of the enlargement parameter delta over counts "
                 "and confidence");
  contour->add_option("-d,--dimension", con_d, "Hilbert dimension")->required();
  contour->add_option("--n-min", con_nmin, "smallest count");
  contour->add_option("--n-max", con_nmax, "largest count");
  contour->add_option("--n-steps", con_nsteps, "count grid size");
  contour->add_option("--c-min", con_cmin, "smallest confidence");
  contour->add_option("--c-max", con_cmax, "largest confidence");
  contour->add_option("--c-steps", con_csteps, "confidence grid size");
  contour->add_option("--out", con_out, "destination (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      vargs.has_seed = o_seed->count() > 0;
      vargs.has_workers = o_workers->count() > 0;
      vargs.has_eta = o_eta->count() > 0;
      vargs.has_mc = o_mc->count() > 0;
      vargs.has_steps = o_steps->count() > 0;
      vargs.has_repeats = o_repeats->count() > 0;
      vargs.has_epsilon = o_eps->count() > 0;
      return run_verify(vargs);
    }
    if (simulate->parsed())
      return run_simulate(phase, noise, settings_name, shots, sim_seed,
                          witness_kind, sim_method, sim_out);
    if (volume->parsed()) return run_volume(vol_d, vol_mc, vol_seed);
    if (contour->parsed())
      return run_contour(con_d, con_nmin, con_nmax, con_nsteps, con_cmin,
                         con_cmax, con_csteps, con_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
