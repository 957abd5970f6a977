#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "twpa/cli/commands.hpp"

using namespace twpa;
using namespace twpa::cli;

namespace {

struct Flags {
  std::string config, out, manifest;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method, kappa_grid, collapse, estimator, dt_twpa_grid, temp_grid;
  std::optional<int> cutoff, phase_points;
  std::optional<double> kappa, gamma, temp, omega_signal, omega_idler, dt_twpa, dt_component, eta, tol, tail_limit,
      delta_theta;
  std::optional<long> samples;
  std::optional<unsigned> jobs;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "output CSV path (manifest goes to PATH.manifest.json)")->required();
  sub->add_option("--seed", f.seed, "Monte Carlo seed");
  sub->add_option("--method", f.method, "full_pure, full_lindblad or reduced");
  sub->add_option("--cutoff", f.cutoff, "per-mode Fock cutoff N (0 = automatic)");
  sub->add_option("--kappa", f.kappa, "amplification of both amplifiers");
  sub->add_option("--kappa-grid", f.kappa_grid, "kappa values: a,b,c or start:stop:step");
  sub->add_option("--gamma", f.gamma, "loss rate in 1/s");
  sub->add_option("--temp", f.temp, "bath temperature in K");
  sub->add_option("--omega-signal", f.omega_signal, "signal angular frequency in rad/s");
  sub->add_option("--omega-idler", f.omega_idler, "idler angular frequency in rad/s");
  sub->add_option("--dt-twpa", f.dt_twpa, "amplifier duration in s");
  sub->add_option("--dt-component", f.dt_component, "hybrid and phase-shifter duration in s");
  sub->add_option("--delta-theta", f.delta_theta, "phase shift in rad");
  sub->add_option("--eta", f.eta, "collapse position in [0, 1]");
  sub->add_option("--collapse", f.collapse, "number or coherent");
  sub->add_option("--estimator", f.estimator, "quadrature or monte_carlo");
  sub->add_option("--samples", f.samples, "Monte Carlo sample count");
  sub->add_option("--tol", f.tol, "integrator and quadrature tolerance");
  sub->add_option("--tail-limit", f.tail_limit, "largest allowed top-level population");
  sub->add_option("--jobs", f.jobs, "worker threads");
  sub->add_option("--phase-points", f.phase_points, "phase grid size for pattern");
  sub->add_option("--dt-twpa-grid", f.dt_twpa_grid, "amplifier durations for fit-f");
  sub->add_option("--temp-grid", f.temp_grid, "temperatures for fit-f");
}

RunRequest build_request(const std::string& name, const Flags& f) {
  RunRequest r;
  r.subcommand = name;
  apply_subcommand_defaults(r);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config '" + f.config + "' is not valid JSON: " + e.what());
    }
    apply_json(r.config, j);
    if (j.contains("collapse")) apply_json(r.collapse, j.at("collapse"));
    if (j.contains("kappa_grid")) r.kappa_grid = j.at("kappa_grid").get<std::vector<double>>();
    if (j.contains("jobs")) r.jobs = j.at("jobs").get<unsigned>();
  }
  ExperimentConfig& c = r.config;
  if (f.method) c.method = parse_method(*f.method);
  if (f.cutoff) c.cutoff = *f.cutoff;
  if (f.kappa) {
    c.kappa_up = c.kappa_low = *f.kappa;
    r.kappa_grid = {*f.kappa};
  }
  if (f.kappa_grid) r.kappa_grid = parse_grid(*f.kappa_grid);
  if (f.omega_signal) c.omega_signal = *f.omega_signal;
  if (f.omega_idler) c.omega_idler = *f.omega_idler;
  if (f.gamma || f.temp || c.bath) {
    const double g = f.gamma ? *f.gamma : (c.bath ? c.bath->gamma : 0.0);
    const double t = f.temp ? *f.temp : (c.bath ? c.bath->temperature : 0.0);
    c.bath = BathSpec(g, t, c.omega_signal);
  }
  if (f.dt_twpa) c.dt.twpa = *f.dt_twpa;
  if (f.dt_component) c.dt.h1 = c.dt.ps = c.dt.h2 = *f.dt_component;
  if (f.delta_theta) c.delta_theta = *f.delta_theta;
  if (f.tol) c.tol = r.collapse.tol = *f.tol;
  if (f.tail_limit) c.tail_limit = *f.tail_limit;
  if (f.eta) r.collapse.eta = *f.eta;
  if (f.collapse) r.collapse.phenomenology = parse_phenomenology(*f.collapse);
  if (f.estimator) r.collapse.estimator = parse_estimator(*f.estimator);
  if (f.samples) r.collapse.samples = *f.samples;
  if (f.seed) r.collapse.seed = *f.seed;
  if (f.jobs) r.jobs = *f.jobs;
  if (f.phase_points) r.phase_points = *f.phase_points;
  if (f.dt_twpa_grid) r.dt_twpa_grid = parse_grid(*f.dt_twpa_grid);
  if (f.temp_grid) r.temperature_grid = parse_grid(*f.temp_grid);
  require(r.jobs >= 1, "--jobs must be >= 1");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-arm parametric-amplifier interferometer simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);
  Flags f;
  for (const auto& name : subcommands()) add_common(app.add_subcommand(name, "write the " + name + " table"), f);
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "re-run a manifest");
  replay->add_option("--manifest", f.manifest, "manifest written by an earlier run")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "output CSV path (default: the manifest's output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (replay->parsed()) {
      std::ifstream in(f.manifest);
      json m = json::parse(in);
      const RunRequest r = load_manifest(f.manifest);
      const std::string out = replay_out.empty() ? m.at("output").get<std::string>() : replay_out;
      run_to_file(r, out);
      std::cerr << "wrote " << out << '\n';
      return 0;
    }
    for (const auto& name : subcommands()) {
      if (!app.got_subcommand(name)) continue;
      const RunRequest r = build_request(name, f);
      run_to_file(r, f.out);
      std::cerr << "wrote " << f.out << " and " << manifest_path(f.out) << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(std::current_exception());
  }
}
