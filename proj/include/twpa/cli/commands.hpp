#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "twpa/cli/request.hpp"
#include "twpa/twpa.hpp"

namespace twpa::cli {

// CSV cell formatting: shortest round-trip doubles, empty cell for undefined values.
inline std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }
inline std::string cell(const std::string& s) { return s; }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(std::uint64_t v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), width_(header.size()) { row_(header); }

  template <class... T>
  void row(const T&... v) {
    static_assert(sizeof...(T) > 0);
    std::vector<std::string> cells{cell(v)...};
    if (cells.size() != width_) throw Error("CSV row width does not match the header");
    row_(cells);
  }

 private:
  void row_(const std::vector<std::string>& c) {
    for (size_t k = 0; k < c.size(); ++k) os_ << (k ? "," : "") << c[k];
    os_ << '\n';
  }
  std::ostream& os_;
  size_t width_;
};

namespace detail {

inline std::vector<double> grid_or_single(const RunRequest& r) {
  if (!r.kappa_grid.empty()) return r.kappa_grid;
  require(r.config.kappa_up == r.config.kappa_low, "set --kappa-grid, or equal kappa_up and kappa_low");
  return {r.config.kappa_up};
}

inline ExperimentConfig at_kappa(ExperimentConfig c, double kappa) {
  c.kappa_up = c.kappa_low = kappa;
  return c;
}

}  // namespace detail

inline void sweep_kappa(const RunRequest& r, std::ostream& os) {
  const auto grid = detail::grid_or_single(r);
  for (double k : grid) detail::at_kappa(r.config, k).validate();
  std::vector<VisibilityResult> res(grid.size());
  twpa::detail::parallel_for(grid.size(), r.jobs, [&](size_t i) { res[i] = run(detail::at_kappa(r.config, grid[i])); });
  CsvWriter w(os, {"kappa", "V_s", "V_i", "n_As", "n_Ai", "n_Bs", "n_Bi", "method", "tail"});
  for (size_t i = 0; i < grid.size(); ++i) {
    const auto& x = res[i];
    w.row(grid[i], x.v.signal, x.v.idler, x.means.As, x.means.Ai, x.means.Bs, x.means.Bi, to_string(x.method), x.tail);
  }
}

// Lossless quantum means (no collapse) used by the stochastic mixture.
inline DetectorMeans quantum_means(const ExperimentConfig& cfg, double kappa) {
  ExperimentConfig c = detail::at_kappa(cfg, kappa);
  c.method = c.delta_theta == 0 ? Method::reduced : Method::full_pure;
  c.bath.reset();
  return run(c).means;
}

inline CollapseMeans collapse_at(const ExperimentConfig& cfg, const CollapseSpec& s, double kappa, double eta,
                                 unsigned jobs) {
  if (s.phenomenology == Phenomenology::number) {
    CollapseMeans m;
    const auto nc = number_collapse(detail::at_kappa(cfg, kappa), eta);
    m.means = nc.means;
    m.v = nc.v;
    m.normalization = nc.probability;
    return m;
  }
  if (s.estimator == Estimator::quadrature) return coherent_collapse_means_quadrature(kappa, eta, s.tol, cfg.delta_theta);
  const SplitState at = split_state_at_collapse(kappa, kappa, eta, cfg.delta_theta);
  return coherent_collapse_means_mc(at, kappa, eta, s.samples, s.seed, jobs);
}

inline void collapse_sweep(const RunRequest& r, std::ostream& os) {
  const auto grid = detail::grid_or_single(r);
  r.collapse.validate();
  require(!r.config.lossy(), "collapse evaluation covers the lossless interferometer only; remove gamma");
  const auto& s = r.collapse;
  CsvWriter w(os, {"kappa", "eta", "phenomenology", "estimator", "V_s", "V_i", "n_As", "n_Ai", "n_Bs", "n_Bi",
                   "stderr_V_s", "stderr_V_i", "stderr_As", "stderr_Ai", "stderr_Bs", "stderr_Bi", "samples", "seed"});
  const bool mc = s.phenomenology == Phenomenology::coherent && s.estimator == Estimator::monte_carlo;
  const std::string est = s.phenomenology == Phenomenology::number ? "born" : to_string(s.estimator);
  for (double k : grid) {
    if (s.pdf) {
      const DetectorMeans q = quantum_means(r.config, k);
      auto fn = [&](double eta) { return collapse_at(r.config, s, k, eta, r.jobs).means; };
      const DetectorMeans m = stochastic_mix(*s.pdf, fn, q);
      const Visibility v = visibility(m);
      w.row(k, std::string("pdf"), to_string(s.phenomenology), est, v.signal, v.idler, m.As, m.Ai, m.Bs, m.Bi,
            std::string(), std::string(), std::string(), std::string(), std::string(), std::string(),
            mc ? cell(s.samples) : std::string(), mc ? cell(s.seed) : std::string());
      continue;
    }
    const CollapseMeans m = collapse_at(r.config, s, k, s.eta, r.jobs);
    auto se = [&](double x) { return mc ? cell(x) : std::string(); };
    w.row(k, s.eta, to_string(s.phenomenology), est, m.v.signal, m.v.idler, m.means.As, m.means.Ai, m.means.Bs,
          m.means.Bi, mc ? cell(m.v_stderr.signal) : std::string(), mc ? cell(m.v_stderr.idler) : std::string(),
          se(m.stderr_means.As), se(m.stderr_means.Ai), se(m.stderr_means.Bs), se(m.stderr_means.Bi),
          mc ? cell(s.samples) : std::string(), mc ? cell(s.seed) : std::string());
  }
}

inline void pattern(const RunRequest& r, std::ostream& os) {
  ExperimentConfig c = r.config;
  if (c.method == Method::reduced) c.method = c.lossy() ? Method::full_lindblad : Method::full_pure;
  const auto rows = interference_pattern(c, phase_grid(r.phase_points), r.jobs);
  CsvWriter w(os, {"delta_theta", "n_As", "n_Ai", "n_Bs", "n_Bi", "tail"});
  for (const auto& x : rows) w.row(x.delta_theta, x.means.As, x.means.Ai, x.means.Bs, x.means.Bi, x.tail);
}

inline void correlations(const RunRequest& r, std::ostream& os) {
  ExperimentConfig c = r.config;
  if (c.method == Method::reduced) c.method = c.lossy() ? Method::full_lindblad : Method::full_pure;
  const ArmCorrelations a = correlations_before_h2(c);
  CsvWriter w(os, {"table", "n1", "n2", "probability"});
  auto dump = [&](const std::string& name, const NumberDistribution& d) {
    const int n = d.layout.cutoff();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w.row(name, i, j, d.at({i, j}));
  };
  dump("signal_up_signal_low", a.signal_up_signal_low);
  dump("signal_up_idler_up", a.signal_up_idler_up);
  dump("idler_up_idler_low", a.idler_up_idler_low);
}

inline void fit_f_command(const RunRequest& r, std::ostream& os) {
  require(r.config.bath.has_value() && r.config.bath->gamma > 0, "fit-f needs a loss rate (--gamma > 0)");
  const std::vector<double> dts = r.dt_twpa_grid.empty() ? std::vector<double>{r.config.dt.twpa} : r.dt_twpa_grid;
  const std::vector<double> temps =
      r.temperature_grid.empty() ? std::vector<double>{r.config.bath->temperature} : r.temperature_grid;
  const FMesh mesh = fit_f_mesh(r.config, dts, temps, r.jobs);
  CsvWriter w(os, {"dt_twpa", "temperature", "gamma_dt_tot", "n_th", "f_shared", "f_As", "f_Ai", "f_Bs", "f_Bi",
                   "max_residual_ratio", "accepted", "V_s_high_gain", "V_i_high_gain"});
  for (const auto& p : mesh.points) {
    const auto v = high_gain_visibility(p.fit);
    w.row(p.dt_twpa, p.temperature, p.x, p.n_th, p.fit.f_shared, p.fit[Channel::As].f, p.fit[Channel::Ai].f,
          p.fit[Channel::Bs].f, p.fit[Channel::Bi].f, p.fit.max_residual_ratio(), cell(p.fit.accepted() ? 1 : 0),
          v.signal, v.idler);
  }
}

inline void compare_reduced(const RunRequest& r, std::ostream& os) {
  const auto grid = detail::grid_or_single(r);
  ExperimentConfig full = r.config, red = r.config;
  full.method = r.config.lossy() ? Method::full_lindblad : Method::full_pure;
  red.method = Method::reduced;
  std::vector<VisibilityResult> a(grid.size()), b(grid.size());
  twpa::detail::parallel_for(grid.size(), r.jobs, [&](size_t i) {
    a[i] = run(detail::at_kappa(full, grid[i]));
    b[i] = run(detail::at_kappa(red, grid[i]));
  });
  CsvWriter w(os, {"kappa", "V_s_full", "V_s_reduced", "V_i_full", "V_i_reduced", "n_As_full", "n_As_reduced",
                   "n_Ai_full", "n_Ai_reduced", "n_Bs_full", "n_Bs_reduced", "n_Bi_full", "n_Bi_reduced", "cutoff_full",
                   "cutoff_reduced", "tail_full", "tail_reduced"});
  for (size_t i = 0; i < grid.size(); ++i)
    w.row(grid[i], a[i].v.signal, b[i].v.signal, a[i].v.idler, b[i].v.idler, a[i].means.As, b[i].means.As,
          a[i].means.Ai, b[i].means.Ai, a[i].means.Bs, b[i].means.Bs, a[i].means.Bi, b[i].means.Bi, a[i].cutoff,
          b[i].cutoff, a[i].tail, b[i].tail);
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"sweep-kappa", "collapse-sweep", "pattern", "correlations", "fit-f",
                                          "compare-reduced"};
  return s;
}

// Defaults that differ from ExperimentConfig's, applied before the config file and flags.
inline void apply_subcommand_defaults(RunRequest& r) {
  if (r.subcommand == "compare-reduced") {
    r.config.cutoff = 5;
    // A five-level space always holds more than 1e-4 in its top levels.
    r.config.tail_limit = 1.0;
    r.kappa_grid = {0.1, 0.2, 0.3, 0.4};
  } else if (r.subcommand == "pattern") {
    r.config.kappa_up = r.config.kappa_low = 0.4;
  } else if (r.subcommand == "fit-f") {
    r.config.method = Method::reduced;
  }
}

inline void execute(const RunRequest& r, std::ostream& os) {
  if (r.subcommand == "sweep-kappa") return sweep_kappa(r, os);
  if (r.subcommand == "collapse-sweep") return collapse_sweep(r, os);
  if (r.subcommand == "pattern") return pattern(r, os);
  if (r.subcommand == "correlations") return correlations(r, os);
  if (r.subcommand == "fit-f") return fit_f_command(r, os);
  if (r.subcommand == "compare-reduced") return compare_reduced(r, os);
  throw ConfigError("unknown subcommand '" + r.subcommand + "'");
}

inline std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

// Runs the request into `out` and writes the manifest beside it.
inline void run_to_file(const RunRequest& r, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::time_t started = std::time(nullptr);
  std::ostringstream csv;
  execute(r, csv);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot open output file '" + out + "'");
  f << csv.str();
  if (!f) throw Error("failed writing '" + out + "'");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started));
  json m{{"request", to_json(r)},
         {"seed", r.collapse.seed},
         {"output", out},
         {"tool_version", tool_version},
         {"started_utc", stamp},
         {"wall_clock_seconds", secs}};
  std::ofstream mf(manifest_path(out));
  if (!mf) throw Error("cannot write manifest '" + manifest_path(out) + "'");
  mf << m.dump(2) << '\n';
}

inline RunRequest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open manifest '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("request")) throw ConfigError("manifest '" + path + "' has no request section");
  return request_from_json(j.at("request"));
}

// Exit codes: 0 ok, 1 other failure, 2 configuration, 3 numerical, 4 convergence.
inline int exit_code_for(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError&) {
    return 2;
  } catch (const ConvergenceError&) {
    return 4;
  } catch (const NumericError&) {
    return 3;
  } catch (...) {
    return 1;
  }
}

}  // namespace twpa::cli
