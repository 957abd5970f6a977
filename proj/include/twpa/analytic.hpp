#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "twpa/detail/arm_state.hpp"
#include "twpa/dynamics.hpp"
#include "twpa/fock.hpp"
#include "twpa/interferometer.hpp"

namespace twpa {

// Sparse list of Fock amplitudes; occupations follow the mode order of the producing function.
struct FockExpansion {
  struct Term {
    std::vector<int> occ;
    cplx c;
  };
  int cutoff = 0;
  std::vector<Term> terms;

  double norm2() const {
    double s = 0;
    for (const auto& t : terms) s += std::norm(t.c);
    return s;
  }
  double tail() const { return std::max(0.0, 1 - norm2()); }

  double mean_number(size_t mode) const {
    double s = 0;
    for (const auto& t : terms) s += std::norm(t.c) * t.occ.at(mode);
    return s;
  }

  cplx amplitude(const std::vector<int>& occ) const {
    for (const auto& t : terms)
      if (t.occ == occ) return t.c;
    return 0;
  }

  QuantumState to_state(const HilbertLayout& L) const {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(L.dimension()));
    for (const auto& t : terms) v[static_cast<Eigen::Index>(L.index(t.occ))] += t.c;
    return QuantumState(L, v);
  }
};

namespace detail {
inline void check_tail(const FockExpansion& e, double bound) {
  if (e.tail() > bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "expansion tail %.3e exceeds %.3e; increase the cutoff", e.tail(), bound);
    throw TruncationError(buf);
  }
}
}  // namespace detail

// Mean signal and idler numbers after lossless amplification of |n_s, n_i>.
inline std::pair<double, double> lossless_amp_output(int n_s, int n_i, double kappa) {
  require(n_s >= 0 && n_i >= 0, "input occupations must be >= 0");
  const double c2 = std::pow(std::cosh(kappa), 2), s2 = std::pow(std::sinh(kappa), 2);
  return {n_s * c2 + (n_i + 1) * s2, n_i * c2 + (n_s + 1) * s2};
}

// Lossless interferometer; the idler visibility is undefined at kappa = 0.
inline Visibility lossless_visibility(double kappa) {
  require(kappa >= 0 && std::isfinite(kappa), "kappa must be >= 0");
  const double c2 = std::pow(std::cosh(kappa), 2), s2 = std::pow(std::sinh(kappa), 2);
  Visibility v;
  v.signal = c2 / (c2 + 2 * s2);
  if (kappa > 0) v.idler = 1.0 / 3.0;
  return v;
}

// e^{-iHt}|N_s, 0> for the non-degenerate amplifier, occupations (n_s, n_i).
inline FockExpansion twpa_fock_evolution(int n_s, double kappa, int cutoff, double tail_bound = 1e-10) {
  require(n_s >= 0, "signal occupation must be >= 0");
  require(cutoff > n_s, "cutoff must exceed the signal occupation");
  const double c = std::cosh(kappa), t = std::tanh(kappa);
  FockExpansion e{cutoff, {}};
  for (int n = 0; n_s + n < cutoff; ++n) {
    // (a+_s a+_i)^n / n! |N_s, 0> = sqrt(C(N_s + n, n)) |N_s + n, n>
    const double logmag = -(1 + n_s) * std::log(c) + (n > 0 ? n * std::log(t) : 0.0) +
                          0.5 * (std::lgamma(n_s + n + 1.0) - std::lgamma(n_s + 1.0) - std::lgamma(n + 1.0));
    if (n > 0 && t == 0) break;
    e.terms.push_back({{n_s + n, n}, std::polar(std::exp(logmag), n * std::numbers::pi / 2)});
  }
  detail::check_tail(e, tail_bound);
  return e;
}

// e^{-iHt}|N_s> for H = -chi(e^{i dphi} a+^2 + h.c.), kappa = chi t. Uses the su(1,1)
// disentangled form exp(tau K+) exp(-2 ln(cosh r) K0) exp(-conj(tau) K-) with r = 2 kappa,
// which is exact for any N_s.
inline FockExpansion degenerate_evolution(int n_s, double kappa, double dphi, int cutoff, double tail_bound = 1e-10) {
  require(n_s >= 0, "signal occupation must be >= 0");
  require(cutoff > n_s, "cutoff must exceed the signal occupation");
  const double r = 2 * kappa;
  const cplx tau = cplx(0, 1) * std::polar(std::tanh(r), dphi);
  const double lc = std::log(std::cosh(r));
  // log sqrt(n!) helper
  auto lsf = [](int n) { return 0.5 * std::lgamma(n + 1.0); };
  std::vector<cplx> amp(cutoff, 0.0);
  for (int j = 0; 2 * j <= n_s; ++j) {
    // (-conj(tau)/2)^j / j! a^{2j} |N_s>
    const int m = n_s - 2 * j;
    cplx lower = std::pow(-std::conj(tau) / 2.0, j) * std::exp(-std::lgamma(j + 1.0) + lsf(n_s) - lsf(m));
    lower *= std::exp(-lc * (m + 0.5));  // cosh^{-(m + 1/2)} r
    for (int k = 0; m + 2 * k < cutoff; ++k) {
      // (tau/2)^k / k! a+^{2k} |m>
      const int out = m + 2 * k;
      const double mag = (k > 0 ? k * std::log(std::abs(tau) / 2) : 0.0) - std::lgamma(k + 1.0) + lsf(out) - lsf(m);
      if (std::abs(tau) == 0 && k > 0) break;
      amp[out] += lower * std::polar(std::exp(mag), k * std::arg(tau));
    }
  }
  FockExpansion e{cutoff, {}};
  for (int n = 0; n < cutoff; ++n)
    if (amp[n] != cplx(0)) e.terms.push_back({{n}, amp[n]});
  detail::check_tail(e, tail_bound);
  return e;
}

// Angle theta minimizing the variance of X_theta = (a e^{-i theta} + a+ e^{i theta}) / sqrt 2,
// in [0, pi).
inline double squeezing_axis(const FockExpansion& single_mode) {
  cplx a2 = 0, a1 = 0;
  std::vector<cplx> c(single_mode.cutoff, 0.0);
  for (const auto& t : single_mode.terms) c.at(t.occ.at(0)) = t.c;
  for (int n = 2; n < single_mode.cutoff; ++n) a2 += std::conj(c[n - 2]) * c[n] * std::sqrt(n * (n - 1.0));
  for (int n = 1; n < single_mode.cutoff; ++n) a1 += std::conj(c[n - 1]) * c[n] * std::sqrt(1.0 * n);
  const cplx var_a2 = a2 - a1 * a1;
  double th = 0.5 * (std::arg(var_a2) + std::numbers::pi);
  th = std::fmod(th, std::numbers::pi);
  if (th < 0) th += std::numbers::pi;
  return th;
}

// Cutoff for which degenerate_evolution(n_s, kappa) leaves less than `target` above it.
inline int degenerate_cutoff(int n_s, double kappa, double target) {
  for (int n = std::max(8, n_s + 4);; n = n + n / 2) {
    if (n > 200000) throw ConfigError("degenerate amplification too large to truncate");
    const double tail = 1 - degenerate_evolution(n_s, kappa, 0, n, 1.0).norm2();
    if (tail < target) return n;
  }
}

struct DegenerateVisibility {
  DetectorMeans means;  // signal entries only
  double quantum = 1;   // (n_B - n_A) / (n_B + n_A)
  double collapse = 1;  // coherent collapse between the amplifiers and the second hybrid
};

// Interferometer with degenerate amplifiers, pump phases (d_dphi, 0) in (up, low) and no
// phase shifter. The arm states are evolved with the component generators.
inline DegenerateVisibility degenerate_visibility(double kappa, double d_dphi, double tail_target = 1e-12) {
  require(kappa >= 0 && std::isfinite(kappa), "kappa must be >= 0");
  const int n = degenerate_cutoff(1, kappa, tail_target);
  auto arm = [&](Arm a, double phase) {
    const HilbertLayout L({Mode{a, Species::signal}}, n);
    const ModeOperator h = build_hamiltonian(ComponentSpec::degenerate(kappa, phase, a == Arm::up ? ArmScope::up : ArmScope::low, 1.0), L);
    std::array<Vec, 2> out;
    for (int k = 0; k < 2; ++k) out[k] = evolve_unitary(make_fock(L, {k}), h, 1.0).vector();
    return out;
  };
  const auto up = arm(Arm::up, d_dphi), low = arm(Arm::low, 0.0);
  // after h1: (|1,0> + i|0,1>) / sqrt 2 in (up, low)
  const std::array<cplx, 2> w{1 / std::sqrt(2.0), cplx(0, 1) / std::sqrt(2.0)};
  const std::array<std::pair<int, int>, 2> branch{{{1, 0}, {0, 1}}};
  const Mat a = single_mode::annihilation(n), num = single_mode::number(n);
  // <Psi| X_up Y_low |Psi> over the two branches
  auto expect = [&](const Mat* x, const Mat* y) {
    cplx s = 0;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const Vec& uj = up[branch[j].first];
        const Vec& uk = up[branch[k].first];
        const Vec& lj = low[branch[j].second];
        const Vec& lk = low[branch[k].second];
        const cplx eu = x ? uj.dot(*x * uk) : uj.dot(uk);
        const cplx el = y ? lj.dot(*y * lk) : lj.dot(lk);
        s += std::conj(w[j]) * w[k] * eu * el;
      }
    return s;
  };
  const Mat ad = a.adjoint();
  const double n_up = expect(&num, nullptr).real(), n_low = expect(nullptr, &num).real();
  const double im = expect(&ad, &a).imag();  // Im <a+_up a_low>
  DegenerateVisibility r;
  r.means.Bs = 0.5 * (n_up + n_low) + im;
  r.means.As = 0.5 * (n_up + n_low) - im;
  r.quantum = (r.means.Bs - r.means.As) / (r.means.Bs + r.means.As);
  // Husimi averages add one photon per output port.
  r.collapse = (r.means.Bs - r.means.As) / (r.means.Bs + r.means.As + 2);
  return r;
}

namespace detail {

// Exact Gaussian integers for the operator-product expansion.
struct GaussInt {
  __int128 re = 0, im = 0;
  GaussInt operator*(const GaussInt& o) const { return {re * o.re - im * o.im, re * o.im + im * o.re}; }
  GaussInt& operator+=(const GaussInt& o) {
    re += o.re, im += o.im;
    return *this;
  }
  cplx value() const { return {static_cast<double>(re), static_cast<double>(im)}; }
};

// Coefficients of (p0 x + p1 y)^n (q0 x + q1 y)^m, indexed by the power of x.
inline std::vector<GaussInt> binomial_product(GaussInt p0, GaussInt p1, int n, GaussInt q0, GaussInt q1, int m) {
  std::vector<GaussInt> poly{{1, 0}};
  auto mul = [&](GaussInt cx, GaussInt cy) {
    std::vector<GaussInt> out(poly.size() + 1);
    for (size_t k = 0; k < poly.size(); ++k) {
      out[k + 1] += poly[k] * cx;
      out[k] += poly[k] * cy;
    }
    poly.swap(out);
  };
  for (int k = 0; k < n; ++k) mul(p0, p1);
  for (int k = 0; k < m; ++k) mul(q0, q1);
  return poly;
}

}  // namespace detail

// Output state behind the second hybrid for a single input photon, amplification kappa
// (upper arm) and kappa_p (lower arm). The double series runs over n, m < cutoff.
// Occupations are (A,s), (A,i), (B,s), (B,i).
inline FockExpansion analytic_output_state(double kappa, double kappa_p, double delta_theta, int cutoff,
                                           double tail_bound = 1e-10) {
  require(kappa >= 0 && kappa_p >= 0, "kappa must be >= 0");
  require(cutoff >= 1 && cutoff <= 60, "series cutoff must lie in [1, 60]");
  const cplx I(0, 1);
  const double ch = std::cosh(kappa), chp = std::cosh(kappa_p);
  const double t = std::tanh(kappa), tp = std::tanh(kappa_p);
  const cplx e = std::polar(1.0, delta_theta);
  // prefactor linear form in the signal creation operators (x = A, y = B)
  const cplx l_a = -e / ch + 1.0 / chp, l_b = I * e / ch + I / chp;
  const cplx pref = 0.5 / (ch * chp);
  const detail::GaussInt one{1, 0}, mone{-1, 0}, gi{0, 1}, mgi{0, -1};

  // log sqrt(k!)
  std::vector<double> lsf(4 * cutoff + 4);
  for (size_t k = 0; k < lsf.size(); ++k) lsf[k] = 0.5 * std::lgamma(k + 1.0);

  std::map<std::array<int, 4>, cplx> amp;
  for (int n = 0; n < cutoff; ++n)
    for (int m = 0; m < cutoff; ++m) {
      if ((n > 0 && t == 0) || (m > 0 && tp == 0)) continue;
      // bracket factors: (-x + i y)^n (x + i y)^m for signal, (x - i y)^n (x + i y)^m for idler
      const auto sig = detail::binomial_product(mone, gi, n, one, gi, m);
      const auto idl = detail::binomial_product(one, mgi, n, one, gi, m);
      const cplx w = pref * std::pow(I * t / 2.0, n) * std::pow(I * tp / 2.0, m) *
                     std::exp(-std::lgamma(n + 1.0) - std::lgamma(m + 1.0));
      const int k = n + m;
      for (int p = 0; p <= k; ++p) {
        const cplx cs = sig[p].value();
        if (cs == cplx(0)) continue;
        for (int r = 0; r <= k; ++r) {
          const cplx ci = idl[r].value();
          if (ci == cplx(0)) continue;
          const cplx base = w * cs * ci;
          // x^p y^(k-p) times the prefactor's x or y
          const int ps_a = p + 1, ps_b = k - p, pi_a = r, pi_b = k - r;
          amp[{ps_a, pi_a, ps_b, pi_b}] += base * l_a * std::exp(lsf[ps_a] + lsf[ps_b] + lsf[pi_a] + lsf[pi_b]);
          amp[{p, pi_a, ps_b + 1, pi_b}] += base * l_b * std::exp(lsf[p] + lsf[ps_b + 1] + lsf[pi_a] + lsf[pi_b]);
        }
      }
    }
  FockExpansion out{2 * cutoff, {}};
  for (const auto& [occ, c] : amp)
    if (c != cplx(0)) out.terms.push_back({{occ[0], occ[1], occ[2], occ[3]}, c});
  detail::check_tail(out, tail_bound);
  return out;
}

// Detector means from an expansion in the (A,s), (A,i), (B,s), (B,i) order.
inline DetectorMeans expansion_means(const FockExpansion& e) {
  return {e.mean_number(0), e.mean_number(1), e.mean_number(2), e.mean_number(3)};
}

}  // namespace twpa
