#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "twpa/detail/parallel.hpp"
#include "twpa/dynamics.hpp"
#include "twpa/fock.hpp"

namespace twpa {

enum class Method { full_pure, full_lindblad, reduced };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::full_pure: return "full_pure";
    case Method::full_lindblad: return "full_lindblad";
    case Method::reduced: return "reduced";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "full_pure") return Method::full_pure;
  if (s == "full_lindblad") return Method::full_lindblad;
  if (s == "reduced") return Method::reduced;
  throw ConfigError("unknown method '" + s + "' (expected full_pure, full_lindblad or reduced)");
}

struct Durations {
  double h1 = 1e-9;
  double ps = 1e-9;
  double twpa = 5e-9;
  double h2 = 1e-9;
};

struct ExperimentConfig {
  double kappa_up = 0;
  double kappa_low = 0;
  double delta_theta = 0;  // rad
  Durations dt;
  // Loss rate and temperature; the bath frequency is taken per species from omega_signal
  // and omega_idler.
  std::optional<BathSpec> bath;
  int cutoff = 0;  // 0: chosen by cutoff_rule
  Method method = Method::full_pure;
  double omega_signal = 2 * std::numbers::pi * 5e9;
  double omega_idler = 2 * std::numbers::pi * 5e9;
  double tol = 1e-10;         // Lindblad integrator tolerance
  double tail_limit = 1e-4;   // hard failure above this edge population
  double tail_target = 1e-7;  // used by the automatic cutoff

  bool lossy() const { return bath && bath->gamma > 0; }
  BathSpec bath_for(Species s) const {
    if (!bath) return {};
    return BathSpec(bath->gamma, bath->temperature, s == Species::signal ? omega_signal : omega_idler);
  }

  void validate() const {
    require(kappa_up >= 0 && kappa_low >= 0 && std::isfinite(kappa_up) && std::isfinite(kappa_low),
            "kappa must be finite and >= 0");
    require(std::isfinite(delta_theta), "phase shift must be finite");
    for (double d : {dt.h1, dt.ps, dt.twpa, dt.h2}) require(d > 0 && std::isfinite(d), "durations must be > 0");
    require(cutoff == 0 || cutoff >= 2, "cutoff must be >= 2 (or 0 for automatic)");
    require(omega_signal > 0 && omega_idler > 0, "mode frequencies must be > 0");
    require(tol > 0, "tolerance must be > 0");
    if (method == Method::full_pure && lossy())
      throw ConfigError("method full_pure cannot include loss; use full_lindblad or reduced");
    if (method == Method::reduced) {
      require(kappa_up == kappa_low, "reduced method requires identical amplifiers (kappa_up == kappa_low)");
      require(delta_theta == 0, "reduced method evaluates the zero phase-shift point only (delta_theta must be 0)");
    }
  }
};

struct DetectorMeans {
  double As = 0, Ai = 0, Bs = 0, Bi = 0;
};

struct Visibility {
  std::optional<double> signal;  // nullopt: no photons of that species reach the detectors
  std::optional<double> idler;
};

// Detector A is the upper output port of the second hybrid, B the lower one.
inline Visibility visibility(const DetectorMeans& m) {
  constexpr double floor = 1e-12;
  Visibility v;
  if (m.Bs + m.As > floor) v.signal = (m.Bs - m.As) / (m.Bs + m.As);
  if (m.Ai + m.Bi > floor) v.idler = (m.Ai - m.Bi) / (m.Ai + m.Bi);
  return v;
}

struct VisibilityResult {
  DetectorMeans means;
  Visibility v;
  double tail = 0;  // largest top-two-level population seen along the pipeline
  Method method = Method::full_pure;
  int cutoff = 0;
};

// Smallest N with N - 1 >= 3 + 8 sinh^2(kappa).
inline int basic_cutoff(double kappa) {
  const double s = std::sinh(kappa);
  return static_cast<int>(std::ceil(4 + 8 * s * s));
}

// Smallest N for which the probability of the two arm signal modes jointly holding N - 2 or
// more photons after lossless amplification of a single photon is below `target`, and at
// least basic_cutoff(kappa).
inline int cutoff_rule(double kappa, double target = 1e-9) {
  const double c2 = std::cosh(kappa) * std::cosh(kappa), t2 = std::tanh(kappa) * std::tanh(kappa);
  const int basic = basic_cutoff(kappa);
  if (kappa == 0) return std::max(basic, 4);
  // p1: arm carrying the photon, p0: vacuum arm, signal marginals
  std::vector<double> p1{0.0}, p0{1.0 / c2};
  std::vector<double> conv;
  for (int n = 2;; ++n) {
    const auto k = static_cast<int>(p0.size());
    p0.push_back(p0.back() * t2);
    p1.push_back(k * std::pow(t2, k - 1) / (c2 * c2));
    // P(sum >= n - 2) = 1 - P(sum <= n - 3)
    double below = 0;
    for (int a = 0; a <= n - 3 && a < static_cast<int>(p1.size()); ++a)
      for (int b = 0; a + b <= n - 3 && b < static_cast<int>(p0.size()); ++b) below += p1[a] * p0[b];
    if (n >= basic && 1.0 - below < target) return n;
    if (n > 4000) throw ConfigError("automatic cutoff exceeds 4000 levels; kappa too large for the full space");
  }
}

namespace detail {

struct Pipeline {
  const ExperimentConfig& cfg;
  HilbertLayout layout;
  double tail = 0;

  void check_tail(const QuantumState& s) {
    const double t = truncation_report(s).max();
    tail = std::max(tail, t);
    if (t > cfg.tail_limit)
      throw TruncationError("truncation tail " + std::to_string(t) + " exceeds " + std::to_string(cfg.tail_limit) +
                            " at N=" + std::to_string(layout.cutoff()) + "; increase the cutoff to at least " +
                            std::to_string(2 * layout.cutoff()));
  }

  QuantumState segment(const QuantumState& s, const ModeOperator& h, double dt, bool lossy) {
    QuantumState out;
    if (lossy) {
      auto jumps = jump_operators(layout, cfg.bath_for(Species::signal), cfg.bath_for(Species::idler));
      IntegrationStats st;
      out = evolve_lindblad(s, h, jumps, dt, cfg.tol, st);
    } else if (s.is_pure() || !h.empty()) {
      out = evolve_unitary(s, h, dt);
    } else {
      out = s;
    }
    check_tail(out);
    return out;
  }
};

inline int resolve_cutoff(const ExperimentConfig& cfg) {
  if (cfg.cutoff > 0) return cfg.cutoff;
  const double k = std::max(cfg.kappa_up, cfg.kappa_low);
  if (cfg.method == Method::full_lindblad) return basic_cutoff(k);
  // thermal excitation climbs above the lossless support at small kappa
  if (cfg.lossy()) return std::max(cutoff_rule(k, cfg.tail_target), 8);
  return cutoff_rule(k, cfg.tail_target);
}

// Runs h1, phase shift and both amplifiers; stops before the second hybrid.
inline QuantumState run_arms(Pipeline& p) {
  const auto& c = p.cfg;
  const auto& L = p.layout;
  const bool lossy = c.method == Method::full_lindblad;
  QuantumState s = make_fock(L, {1, 0, 0, 0});
  if (lossy) s = s.to_mixed();
  s = p.segment(s, build_hamiltonian(ComponentSpec::hybrid(c.dt.h1), L), c.dt.h1, lossy);
  s = p.segment(s, build_hamiltonian(ComponentSpec::phase_shifter(c.delta_theta, c.dt.ps, ArmScope::up), L), c.dt.ps,
                lossy);
  ModeOperator amp = build_hamiltonian(ComponentSpec::twpa(c.kappa_up, ArmScope::up, c.dt.twpa), L) +
                     build_hamiltonian(ComponentSpec::twpa(c.kappa_low, ArmScope::low, c.dt.twpa), L);
  return p.segment(s, amp, c.dt.twpa, lossy);
}

}  // namespace detail

struct FullRun {
  QuantumState state;  // at the detectors; (up, *) modes are detector A, (low, *) detector B
  VisibilityResult result;
};

inline DetectorMeans detector_means(const QuantumState& s) {
  return {mean_number(s, up_s), mean_number(s, up_i), mean_number(s, low_s), mean_number(s, low_i)};
}

inline FullRun run_full(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.method != Method::reduced, "run_full needs method full_pure or full_lindblad");
  detail::Pipeline p{cfg, HilbertLayout::interferometer(detail::resolve_cutoff(cfg))};
  QuantumState s = detail::run_arms(p);
  s = p.segment(s, build_hamiltonian(ComponentSpec::hybrid(cfg.dt.h2), p.layout), cfg.dt.h2,
                cfg.method == Method::full_lindblad);
  VisibilityResult r;
  r.means = detector_means(s);
  r.v = visibility(r.means);
  r.tail = p.tail;
  r.method = cfg.method;
  r.cutoff = p.layout.cutoff();
  return {std::move(s), r};
}

// Two single-arm runs: |1,0> gives <n_Bs>, <n_Ai>; |0,0> gives <n_As>, <n_Bi>.
inline VisibilityResult run_reduced(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.method = Method::reduced;
  c.validate();
  const bool lossy = c.lossy();
  detail::Pipeline p{c, HilbertLayout::single_arm(detail::resolve_cutoff(c))};
  const auto& L = p.layout;
  const ModeOperator none(L);
  const ModeOperator amp = build_hamiltonian(ComponentSpec::twpa(c.kappa_up, ArmScope::up, c.dt.twpa), L);
  double out[2][2];
  for (int photon = 1; photon >= 0; --photon) {
    QuantumState s = make_fock(L, {photon, 0});
    if (lossy) {
      s = s.to_mixed();
      s = p.segment(s, none, c.dt.h1, true);
      s = p.segment(s, none, c.dt.ps, true);
    }
    s = p.segment(s, amp, c.dt.twpa, lossy);
    if (lossy) s = p.segment(s, none, c.dt.h2, true);
    out[photon][0] = mean_number(s, up_s);
    out[photon][1] = mean_number(s, up_i);
  }
  VisibilityResult r;
  r.means = {out[0][0], out[1][1], out[1][0], out[0][1]};
  r.v = visibility(r.means);
  r.tail = p.tail;
  r.method = Method::reduced;
  r.cutoff = L.cutoff();
  return r;
}

inline VisibilityResult run(const ExperimentConfig& cfg) {
  return cfg.method == Method::reduced ? run_reduced(cfg) : run_full(cfg).result;
}

struct PatternRow {
  double delta_theta;  // reduced to [0, 2 pi)
  DetectorMeans means;
  double tail;
};

inline std::vector<PatternRow> interference_pattern(const ExperimentConfig& cfg, const std::vector<double>& grid,
                                                    unsigned jobs = 1) {
  require(!grid.empty(), "phase grid must not be empty");
  require(cfg.method != Method::reduced, "interference pattern needs a full-space method");
  std::vector<PatternRow> rows(grid.size());
  detail::parallel_for(grid.size(), jobs, [&](size_t i) {
    ExperimentConfig c = cfg;
    c.delta_theta = grid[i];
    auto r = run_full(c).result;
    double th = std::fmod(grid[i], 2 * std::numbers::pi);
    if (th < 0) th += 2 * std::numbers::pi;
    rows[i] = {th, r.means, r.tail};
  });
  return rows;
}

inline std::vector<double> phase_grid(int points = 64) {
  require(points >= 1, "phase grid needs at least one point");
  std::vector<double> g(static_cast<size_t>(points));
  for (int k = 0; k < points; ++k) g[static_cast<size_t>(k)] = 2 * std::numbers::pi * k / points;
  return g;
}

// Photon-number correlations between the arms just before the second hybrid.
struct ArmCorrelations {
  NumberDistribution signal_up_signal_low;  // (n_up_s, n_low_s)
  NumberDistribution signal_up_idler_up;   // (n_up_s, n_up_i)
  NumberDistribution idler_up_idler_low;    // (n_up_i, n_low_i)
  double tail = 0;
};

inline ArmCorrelations correlations_before_h2(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.method != Method::reduced, "correlations need a full-space method");
  detail::Pipeline p{cfg, HilbertLayout::interferometer(detail::resolve_cutoff(cfg))};
  QuantumState s = detail::run_arms(p);
  NumberDistribution d = number_distribution(s);
  const auto& L = p.layout;
  const size_t us = L.position(up_s), ui = L.position(up_i), ls = L.position(low_s), li = L.position(low_i);
  return {d.marginal({us, ls}), d.marginal({us, ui}), d.marginal({ui, li}), p.tail};
}

}  // namespace twpa
