// Acceptance report: one PASS/FAIL line per criterion. Always exits 0 so the report is
// produced in full; the unit suites carry the pass/fail gating.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "twpa/twpa.hpp"

using namespace twpa;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

const double omega = 2 * std::numbers::pi * 5e9;

// Gamma = 100 MHz, 50 mK, 1 ns hybrids and phase shifter (Gamma dt = 0.1 per segment).
ExperimentConfig lossy_reduced(double gamma_dt_twpa) {
  ExperimentConfig c;
  c.method = Method::reduced;
  c.bath = BathSpec(1e8, 0.05, omega);
  c.dt.h1 = c.dt.ps = c.dt.h2 = 1e-9;
  c.dt.twpa = gamma_dt_twpa / 1e8;
  c.tol = 1e-10;
  return c;
}

LossFit fit_at(double gamma_dt_twpa) {
  const auto c = lossy_reduced(gamma_dt_twpa);
  return fit_f(simulate_kappa_table(c, fit_kappa_grid()), kappa0_outputs(c));
}

Outcome lossless_closed_form() {
  double ds = 0, di = 0;
  for (int k10 = 1; k10 <= 12; ++k10) {
    ExperimentConfig c;
    c.kappa_up = c.kappa_low = k10 / 10.0;
    const auto r = run_full(c).result;
    const double c2 = std::pow(std::cosh(c.kappa_up), 2), s2 = std::pow(std::sinh(c.kappa_up), 2);
    ds = std::max(ds, std::abs(*r.v.signal - c2 / (c2 + 2 * s2)));
    di = std::max(di, std::abs(*r.v.idler - 1.0 / 3));
  }
  return {ds < 1e-6 && di < 1e-6, fmt("max|dV_s|=%.2e max|dV_i|=%.2e (tol 1e-6)", ds, di)};
}

Outcome high_gain_limit() {
  const double v = *lossless_visibility(4.7).signal;
  return {v >= 0.3333 && v <= 0.3340, fmt("V(4.7)=%.6f in [0.3333, 0.3340]", v)};
}

Outcome flagship_lossy() {
  const auto v = high_gain_visibility(fit_at(0.5));
  const bool ok = std::abs(*v.signal - 0.26) <= 0.02 && std::abs(*v.idler - 0.26) <= 0.02;
  return {ok, fmt("V_s=%.4f V_i=%.4f (target 0.26 +- 0.02)", *v.signal, *v.idler)};
}

Outcome reduced_full_equivalence() {
  double worst = 0, at_g = 0, at_k = 0;
  for (double g : {0.1, 0.5, 1.0, 1.5})
    for (double k : {0.1, 0.2, 0.3, 0.4}) {
      auto c = lossy_reduced(g);
      c.kappa_up = c.kappa_low = k;
      c.cutoff = 5;
      c.tail_limit = 1.0;
      const auto red = run(c);
      c.method = Method::full_lindblad;
      const auto full = run(c);
      for (double d : {std::abs(*red.v.signal - *full.v.signal), std::abs(*red.v.idler - *full.v.idler)})
        if (d > worst) worst = d, at_g = g, at_k = k;
    }
  return {worst < 1e-3, fmt("max|V_red - V_full|=%.3e at Gamma*dt_TWPA=%.2f kappa=%.1f (tol 1e-3)", worst, at_g, at_k)};
}

Outcome lindblad_decay() {
  const HilbertLayout L({up_s}, 30);
  double worst = 0;
  int pairs = 0;
  for (double g : {1e7, 1e8, 5e8, 1e9, 3e9})
    for (double t : {0.02, 0.25}) {
      const BathSpec bath(g, t, omega);
      const double dt = 0.7 / g;
      const auto s = evolve_lindblad(make_fock(L, {1}), ModeOperator(L), jump_operators(L, bath), dt, 1e-11);
      const double nth = bath.n_th();
      worst = std::max(worst, std::abs(mean_number(s, up_s) - ((1 - nth) * std::exp(-g * dt) + nth)));
      ++pairs;
    }
  return {worst < 1e-6, fmt("max deviation %.2e over %d (Gamma, T) pairs (tol 1e-6)", worst, pairs)};
}

Outcome fit_parameter_limit() {
  bool ok = true;
  std::string d;
  for (double g : {0.1, 0.25, 0.5, 1.0, 1.5}) {
    const auto c = lossy_reduced(g);
    const double x = 1e8 * total_duration(c.dt);
    const double f = fit_at(g).f_shared;
    const bool here = std::abs(f - x / 2) < 0.05 * x;
    ok = ok && here;
    d += fmt("%sx=%.2f f=%.4f x/2=%.3f%s", d.empty() ? "" : "; ", x, f, x / 2, here ? "" : " (out)");
  }
  return {ok, d + " (tol 0.05 x)"};
}

Outcome number_collapse_zero() {
  double worst = 0;
  for (double k : {0.3, 1.0})
    for (double eta : {0.0, 0.5, 1.0}) {
      ExperimentConfig c;
      c.kappa_up = c.kappa_low = k;
      const auto v = number_collapse(c, eta).v;
      worst = std::max({worst, std::abs(*v.signal), std::abs(*v.idler)});
    }
  return {worst < 1e-9, fmt("max|V|=%.2e (tol 1e-9)", worst)};
}

struct GridPoint {
  double kappa, eta, target, tol;
};
const std::vector<GridPoint> coherent_grid{
    {0.5, 1.0, 1.0 / 3, 1e-4}, {2.5, 1.0, 1.0 / 3, 1e-4}, {2.5, 0.0, 0.20, 0.01}, {2.5, 0.5, 0.15, 0.01}};

Outcome coherent_quadrature() {
  bool ok = true;
  std::string d;
  for (const auto& p : coherent_grid) {
    const double v = *coherent_collapse_means_quadrature(p.kappa, p.eta).v.signal;
    const bool here = std::abs(v - p.target) <= p.tol;
    ok = ok && here;
    d += fmt("%s(k=%.1f, eta=%.1f) V=%.4f target %.4f%s", d.empty() ? "" : "; ", p.kappa, p.eta, v, p.target,
             here ? "" : " (out)");
  }
  return {ok, d};
}

Outcome coherent_mc() {
  bool agree = true, noise = true;
  double worst_se = 0, worst_noise = 0;
  for (const auto& p : coherent_grid) {
    const auto q = coherent_collapse_means_quadrature(p.kappa, p.eta);
    const auto m = coherent_collapse_means_mc(split_state_at_collapse(p.kappa, p.kappa, p.eta), p.kappa, p.eta,
                                              100000, 2024);
    for (auto [a, b, se] : {std::tuple{*m.v.signal, *q.v.signal, *m.v_stderr.signal},
                            std::tuple{*m.v.idler, *q.v.idler, *m.v_stderr.idler}}) {
      worst_se = std::max(worst_se, std::abs(a - b) / se);
      agree = agree && std::abs(a - b) < 3 * se;
    }
    // mean numbers at the collapse point for (|1,0> + i|0,1>)/sqrt 2 amplified by eta kappa
    const double c2 = std::pow(std::cosh(p.eta * p.kappa), 2), s2 = std::pow(std::sinh(p.eta * p.kappa), 2);
    const double pre[4] = {0.5 * c2 + s2, 1.5 * s2, 0.5 * c2 + s2, 1.5 * s2};
    for (int j = 0; j < 4; ++j) {
      const double z = std::abs(m.mode_means[j] - (pre[j] + 1)) / m.mode_stderr[j];
      worst_noise = std::max(worst_noise, z);
      noise = noise && z < 2;
    }
  }
  return {agree && noise,
          fmt("max |V_mc - V_quad|/SE=%.2f (tol 3); max |<|alpha|^2> - (<n>+1)|/SE=%.2f (tol 2); 1e5 samples, seed 2024",
              worst_se, worst_noise)};
}

Outcome properties() {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const char* name) {
    if (!ok) bad.push_back(name);
  };
  const double k = 0.6;
  const int n = cutoff_rule(k);
  const auto L = HilbertLayout::interferometer(n);
  const auto h1 = build_hamiltonian(ComponentSpec::hybrid(1e-9), L);
  const auto amp = build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 1e-9), L) +
                   build_hamiltonian(ComponentSpec::twpa(k, ArmScope::low, 1e-9), L);
  const auto ps = build_hamiltonian(ComponentSpec::phase_shifter(0.8, 1e-9), L);
  check(std::max({h1.hermiticity_defect(), amp.hermiticity_defect(), ps.hermiticity_defect()}) < 1e-12,
        "hermiticity");

  auto psi = evolve_unitary(make_fock(L, {1, 0, 0, 0}), h1, 1e-9);
  psi = evolve_unitary(psi, amp, 1e-9);
  check(std::abs(psi.weight() - 1) < 1e-10, "norm");
  check(truncation_report(psi).max() < 1e-6, "truncation tail");

  const auto dist = number_distribution(psi);
  bool support = true, exchange = true;
  for (size_t i = 0; i < L.dimension(); ++i) {
    const auto o = L.occupations(i);
    const double p = dist.probabilities[i];
    if (p > 1e-14 && !((o[1] == o[0] || o[1] == o[0] - 1) && (o[3] == o[2] || o[3] == o[2] - 1))) support = false;
    if (std::abs(p - dist.at({o[2], o[3], o[0], o[1]})) > 1e-12) exchange = false;
  }
  check(support, "support rule");
  check(exchange, "arm exchange");

  const HilbertLayout arm = HilbertLayout::single_arm(n);
  const auto whole = evolve_unitary(make_fock(arm, {1, 0}), build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 1e-9), arm), 1e-9);
  auto split = evolve_unitary(make_fock(arm, {1, 0}), build_hamiltonian(ComponentSpec::twpa(0.35 * k, ArmScope::up, 1e-9), arm), 1e-9);
  split = evolve_unitary(split, build_hamiltonian(ComponentSpec::twpa(0.65 * k, ArmScope::up, 1e-9), arm), 1e-9);
  check((whole.vector() - split.vector()).norm() < 1e-10, "generator additivity");

  ExperimentConfig c;
  c.kappa_up = c.kappa_low = 0.4;
  double lo_s = 1e9, hi_s = -1e9, lo_i = 1e9, hi_i = -1e9;
  for (const auto& r : interference_pattern(c, phase_grid(16), 1)) {
    lo_s = std::min(lo_s, r.means.As + r.means.Bs), hi_s = std::max(hi_s, r.means.As + r.means.Bs);
    lo_i = std::min(lo_i, r.means.Ai + r.means.Bi), hi_i = std::max(hi_i, r.means.Ai + r.means.Bi);
  }
  check(hi_s - lo_s < 1e-9 && hi_i - lo_i < 1e-9, "hybrid unitarity");

  ExperimentConfig lossy = lossy_reduced(0.5);
  lossy.kappa_up = lossy.kappa_low = 0.3;
  lossy.method = Method::full_lindblad;
  lossy.cutoff = 6;
  lossy.tail_limit = 1.0;
  check(std::abs(run_full(lossy).state.weight() - 1) < 1e-8, "trace");

  std::string d = "trace, norm, hermiticity, tails < 1e-6, support rule, hybrid unitarity, additivity, arm exchange";
  if (!bad.empty()) {
    d = "violated:";
    for (const auto& b : bad) d += " " + b;
  }
  return {bad.empty(), d};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"lossless closed form", lossless_closed_form},
      {"high-gain limit", high_gain_limit},
      {"lossy high-gain visibility", flagship_lossy},
      {"reduced/full equivalence", reduced_full_equivalence},
      {"Lindblad decay oracle", lindblad_decay},
      {"fit-parameter limit", fit_parameter_limit},
      {"number collapse", number_collapse_zero},
      {"coherent collapse, quadrature", coherent_quadrature},
      {"coherent collapse, Monte Carlo", coherent_mc},
      {"property suites", properties},
  };
  int passed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    passed += o.pass;
    std::printf("criterion %zu %s: %s | %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  return 0;
}
