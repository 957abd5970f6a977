#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twpa/collapse.hpp"
#include "twpa/interferometer.hpp"

namespace twpa::cli {

using nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

// Everything a subcommand needs; serialized verbatim into the manifest.
struct RunRequest {
  std::string subcommand;
  ExperimentConfig config;
  CollapseSpec collapse;
  std::vector<double> kappa_grid;
  std::vector<double> dt_twpa_grid;      // fit-f
  std::vector<double> temperature_grid;  // fit-f
  int phase_points = 64;                 // pattern
  unsigned jobs = 1;
};

// "0.1,0.2,0.5" or "start:stop:step" (inclusive of stop within step/1e6).
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> g;
  auto num = [&](const std::string& s) {
    try {
      size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + s + "' as a number in grid '" + text + "'");
    }
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("range grid must be start:stop:step, got '" + text + "'");
    const double a = num(parts[0]), b = num(parts[1]), h = num(parts[2]);
    require(h > 0, "grid step must be > 0");
    require(b >= a, "grid stop must be >= start");
    const auto n = static_cast<long>(std::floor((b - a) / h + 1e-6));
    require(n < 1000000, "grid has too many points");
    // 12 significant digits keeps 0.1:1:0.1 at 0.3 rather than 0.30000000000000004
    for (long k = 0; k <= n; ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", a + static_cast<double>(k) * h);
      g.push_back(std::stod(buf));
    }
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');)
      if (!p.empty()) g.push_back(num(p));
  }
  if (g.empty()) throw ConfigError("grid '" + text + "' has no points");
  return g;
}

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("unknown key '" + k + "' in " + where + " (allowed: " + list + ")");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace detail

inline json to_json(const PositionPdf& p) {
  json atoms = json::array();
  for (const auto& [eta, w] : p.atoms) atoms.push_back({eta, w});
  return {{"knots", p.knots}, {"density", p.density}, {"atoms", atoms}};
}

inline PositionPdf pdf_from_json(const json& j) {
  detail::reject_unknown(j, {"knots", "density", "atoms"}, "collapse.pdf");
  PositionPdf p;
  p.knots = detail::get_or<std::vector<double>>(j, "knots", {});
  p.density = detail::get_or<std::vector<double>>(j, "density", {});
  for (const auto& a : detail::get_or<std::vector<std::vector<double>>>(j, "atoms", {})) {
    if (a.size() != 2) throw ConfigError("collapse.pdf.atoms entries must be [eta, probability]");
    p.atoms.emplace_back(a[0], a[1]);
  }
  p.validate();
  return p;
}

inline json to_json(const ExperimentConfig& c) {
  json j{{"kappa_up", c.kappa_up},
         {"kappa_low", c.kappa_low},
         {"delta_theta", c.delta_theta},
         {"durations", {{"h1", c.dt.h1}, {"ps", c.dt.ps}, {"twpa", c.dt.twpa}, {"h2", c.dt.h2}}},
         {"gamma", c.bath ? c.bath->gamma : 0.0},
         {"temperature", c.bath ? c.bath->temperature : 0.0},
         {"omega_signal", c.omega_signal},
         {"omega_idler", c.omega_idler},
         {"cutoff", c.cutoff},
         {"method", to_string(c.method)},
         {"tol", c.tol},
         {"tail_limit", c.tail_limit},
         {"tail_target", c.tail_target}};
  return j;
}

// Applies the keys present in `j` on top of `c`.
inline void apply_json(ExperimentConfig& c, const json& j) {
  using detail::get_or;
  detail::reject_unknown(j,
                         {"kappa", "kappa_up", "kappa_low", "delta_theta", "durations", "gamma", "temperature",
                          "omega_signal", "omega_idler", "cutoff", "method", "tol", "tail_limit", "tail_target",
                          "collapse", "kappa_grid", "jobs"},
                         "config");
  if (j.contains("kappa")) c.kappa_up = c.kappa_low = get_or<double>(j, "kappa", 0);
  c.kappa_up = get_or(j, "kappa_up", c.kappa_up);
  c.kappa_low = get_or(j, "kappa_low", c.kappa_low);
  c.delta_theta = get_or(j, "delta_theta", c.delta_theta);
  if (j.contains("durations")) {
    const json& d = j.at("durations");
    detail::reject_unknown(d, {"h1", "ps", "twpa", "h2"}, "config.durations");
    c.dt.h1 = get_or(d, "h1", c.dt.h1);
    c.dt.ps = get_or(d, "ps", c.dt.ps);
    c.dt.twpa = get_or(d, "twpa", c.dt.twpa);
    c.dt.h2 = get_or(d, "h2", c.dt.h2);
  }
  c.omega_signal = get_or(j, "omega_signal", c.omega_signal);
  c.omega_idler = get_or(j, "omega_idler", c.omega_idler);
  if (j.contains("gamma") || j.contains("temperature")) {
    const double g = get_or(j, "gamma", c.bath ? c.bath->gamma : 0.0);
    const double t = get_or(j, "temperature", c.bath ? c.bath->temperature : 0.0);
    c.bath = BathSpec(g, t, c.omega_signal);
  }
  if (c.bath) c.bath = BathSpec(c.bath->gamma, c.bath->temperature, c.omega_signal);
  c.cutoff = get_or(j, "cutoff", c.cutoff);
  if (j.contains("method")) c.method = parse_method(get_or<std::string>(j, "method", ""));
  c.tol = get_or(j, "tol", c.tol);
  c.tail_limit = get_or(j, "tail_limit", c.tail_limit);
  c.tail_target = get_or(j, "tail_target", c.tail_target);
}

inline json to_json(const CollapseSpec& s) {
  json j{{"phenomenology", to_string(s.phenomenology)},
         {"eta", s.eta},
         {"estimator", to_string(s.estimator)},
         {"samples", s.samples},
         {"tol", s.tol},
         {"seed", s.seed}};
  if (s.pdf) j["pdf"] = to_json(*s.pdf);
  return j;
}

inline void apply_json(CollapseSpec& s, const json& j) {
  using detail::get_or;
  detail::reject_unknown(j, {"phenomenology", "eta", "estimator", "samples", "tol", "seed", "pdf"}, "collapse");
  if (j.contains("phenomenology")) s.phenomenology = parse_phenomenology(get_or<std::string>(j, "phenomenology", ""));
  s.eta = get_or(j, "eta", s.eta);
  if (j.contains("estimator")) s.estimator = parse_estimator(get_or<std::string>(j, "estimator", ""));
  s.samples = get_or(j, "samples", s.samples);
  s.tol = get_or(j, "tol", s.tol);
  s.seed = get_or(j, "seed", s.seed);
  if (j.contains("pdf")) s.pdf = pdf_from_json(j.at("pdf"));
}

inline json to_json(const RunRequest& r) {
  return {{"subcommand", r.subcommand},
          {"config", to_json(r.config)},
          {"collapse", to_json(r.collapse)},
          {"kappa_grid", r.kappa_grid},
          {"dt_twpa_grid", r.dt_twpa_grid},
          {"temperature_grid", r.temperature_grid},
          {"phase_points", r.phase_points},
          {"jobs", r.jobs}};
}

inline RunRequest request_from_json(const json& j) {
  using detail::get_or;
  detail::reject_unknown(j,
                         {"subcommand", "config", "collapse", "kappa_grid", "dt_twpa_grid", "temperature_grid",
                          "phase_points", "jobs"},
                         "request");
  RunRequest r;
  r.subcommand = get_or<std::string>(j, "subcommand", "");
  if (j.contains("config")) {
    // gamma = 0 and temperature = 0 mean "no bath"
    apply_json(r.config, j.at("config"));
    if (r.config.bath && r.config.bath->gamma == 0 && r.config.bath->temperature == 0) r.config.bath.reset();
  }
  if (j.contains("collapse")) apply_json(r.collapse, j.at("collapse"));
  r.kappa_grid = get_or<std::vector<double>>(j, "kappa_grid", {});
  r.dt_twpa_grid = get_or<std::vector<double>>(j, "dt_twpa_grid", {});
  r.temperature_grid = get_or<std::vector<double>>(j, "temperature_grid", {});
  r.phase_points = get_or(j, "phase_points", r.phase_points);
  r.jobs = get_or(j, "jobs", r.jobs);
  return r;
}

}  // namespace twpa::cli
