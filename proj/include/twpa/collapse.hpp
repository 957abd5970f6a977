#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_bessel.h>

#include "twpa/detail/arm_state.hpp"
#include "twpa/detail/parallel.hpp"
#include "twpa/interferometer.hpp"

namespace twpa {

enum class Phenomenology { number, coherent };
enum class Estimator { quadrature, monte_carlo };

inline std::string to_string(Phenomenology p) { return p == Phenomenology::number ? "number" : "coherent"; }
inline std::string to_string(Estimator e) { return e == Estimator::quadrature ? "quadrature" : "monte_carlo"; }

inline Phenomenology parse_phenomenology(const std::string& s) {
  if (s == "number") return Phenomenology::number;
  if (s == "coherent") return Phenomenology::coherent;
  throw ConfigError("unknown collapse phenomenology '" + s + "' (expected number or coherent)");
}
inline Estimator parse_estimator(const std::string& s) {
  if (s == "quadrature") return Estimator::quadrature;
  if (s == "monte_carlo" || s == "mc") return Estimator::monte_carlo;
  throw ConfigError("unknown estimator '" + s + "' (expected quadrature or monte_carlo)");
}

// Density of the collapse position: piecewise linear on `knots` plus point masses.
struct PositionPdf {
  std::vector<double> knots, density;
  std::vector<std::pair<double, double>> atoms;  // (eta, probability)

  static PositionPdf none() { return {}; }
  static PositionPdf uniform(double mass) { return {{0.0, 1.0}, {mass, mass}, {}}; }
  static PositionPdf delta(double eta, double mass = 1.0) { return {{}, {}, {{eta, mass}}}; }

  double mass() const {
    double m = 0;
    for (size_t k = 0; k + 1 < knots.size(); ++k) m += 0.5 * (density[k] + density[k + 1]) * (knots[k + 1] - knots[k]);
    for (const auto& a : atoms) m += a.second;
    return m;
  }

  void validate() const {
    require(knots.size() == density.size(), "pdf knots and densities differ in length");
    require(knots.size() != 1, "pdf needs at least two knots");
    for (size_t k = 0; k < knots.size(); ++k) {
      require(knots[k] >= 0 && knots[k] <= 1, "pdf knots must lie in [0, 1]");
      require(density[k] >= 0 && std::isfinite(density[k]), "pdf density must be >= 0");
      if (k > 0) require(knots[k] > knots[k - 1], "pdf knots must increase");
    }
    for (const auto& a : atoms) {
      require(a.first >= 0 && a.first <= 1, "pdf point mass position must lie in [0, 1]");
      require(a.second >= 0, "pdf point mass must be >= 0");
    }
    const double m = mass();
    if (m > 1 + 1e-12) throw ConfigError("collapse pdf mass " + std::to_string(m) + " exceeds 1");
  }
};

struct CollapseSpec {
  Phenomenology phenomenology = Phenomenology::coherent;
  double eta = 1.0;
  std::optional<PositionPdf> pdf;
  Estimator estimator = Estimator::quadrature;
  long samples = 100000;
  double tol = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    require(eta >= 0 && eta <= 1, "collapse position eta must lie in [0, 1]");
    require(samples > 0, "sample count must be > 0");
    require(tol > 0, "tolerance must be > 0");
    if (pdf) pdf->validate();
  }
};

// Amplitudes in mode order (up,s), (up,i), (low,s), (low,i).
struct CoherentPoint {
  std::array<cplx, 4> alpha{};

  cplx& operator[](Mode m) { return alpha[index(m)]; }
  const cplx& operator[](Mode m) const { return alpha[index(m)]; }
  static size_t index(Mode m) { return (m.arm == Arm::up ? 0 : 2) + (m.species == Species::signal ? 0 : 1); }
};

// <alpha|n> for n = 0..N-1, stable for large |alpha|.
inline Vec coherent_bra(cplx alpha, int n) {
  Vec v = Vec::Zero(n);
  const double r2 = std::norm(alpha);
  if (r2 == 0) {
    v[0] = 1;
    return v;
  }
  const cplx ac = std::conj(alpha);
  const int n0 = std::min(n - 1, static_cast<int>(std::floor(r2)));
  const double logmag = -0.5 * r2 + n0 * 0.5 * std::log(r2) - 0.5 * std::lgamma(n0 + 1.0);
  v[n0] = std::polar(std::exp(logmag), n0 * std::arg(ac));
  for (int k = n0 + 1; k < n; ++k) v[k] = v[k - 1] * ac / std::sqrt(static_cast<double>(k));
  for (int k = n0; k > 0; --k) v[k - 1] = v[k] * std::sqrt(static_cast<double>(k)) / ac;
  return v;
}

// |<alpha|psi>|^2 for a pure state over any subset of the four interferometer modes.
// The Husimi density is this value divided by pi^(number of modes).
inline double coherent_overlap(const QuantumState& state, const CoherentPoint& point) {
  require(state.is_pure(), "coherent overlap needs a pure state");
  const auto& L = state.layout();
  std::vector<Vec> bras;
  for (const auto& m : L.modes()) bras.push_back(coherent_bra(point[m], L.cutoff()));
  cplx s = 0;
  const Vec& psi = state.vector();
  for (size_t i = 0; i < L.dimension(); ++i) {
    const cplx c = psi[static_cast<Eigen::Index>(i)];
    if (c == cplx(0)) continue;
    cplx t = c;
    for (size_t k = 0; k < L.num_modes(); ++k) t *= bras[k][L.occupation(i, k)];
    s += t;
  }
  return std::norm(s);
}

inline double coherent_overlap(const SplitState& state, const CoherentPoint& point) {
  cplx s = 0;
  for (const auto& t : state.terms) {
    auto arm = [](const ArmState& a, cplx as, cplx ai) {
      const Vec bs = coherent_bra(as, a.cutoff()), bi = coherent_bra(ai, a.cutoff());
      return bs.transpose() * a.amp * bi;
    };
    s += t.weight * cplx(arm(t.up, point.alpha[0], point.alpha[1])) * cplx(arm(t.low, point.alpha[2], point.alpha[3]));
  }
  return std::norm(s);
}

// Classical amplification by (1 - eta) kappa: a_s -> C a_s + i S a_i^*, a_i -> C a_i + i S a_s^*.
inline CoherentPoint evolve_amplitudes(const CoherentPoint& p, double kappa_up, double kappa_low, double eta) {
  CoherentPoint q;
  const cplx I(0, 1);
  for (int arm = 0; arm < 2; ++arm) {
    const double k = (1 - eta) * (arm == 0 ? kappa_up : kappa_low);
    const double c = std::cosh(k), s = std::sinh(k);
    const cplx as = p.alpha[2 * arm], ai = p.alpha[2 * arm + 1];
    q.alpha[2 * arm] = c * as + I * s * std::conj(ai);
    q.alpha[2 * arm + 1] = c * ai + I * s * std::conj(as);
  }
  return q;
}
inline CoherentPoint evolve_amplitudes(const CoherentPoint& p, double kappa, double eta) {
  return evolve_amplitudes(p, kappa, kappa, eta);
}

// Photon counts behind the second hybrid: n_B = |i a_up + a_low|^2 / 2, n_A = |a_up + i a_low|^2 / 2.
inline DetectorMeans detector_counts(const CoherentPoint& p) {
  const cplx I(0, 1);
  auto n = [](cplx z) { return 0.5 * std::norm(z); };
  return {n(p.alpha[0] + I * p.alpha[2]), n(p.alpha[1] + I * p.alpha[3]), n(I * p.alpha[0] + p.alpha[2]),
          n(I * p.alpha[1] + p.alpha[3])};
}

struct CollapseMeans {
  DetectorMeans means;
  DetectorMeans stderr_means;             // zero for quadrature
  std::array<double, 4> mode_means{};     // E|alpha_j|^2 at the collapse point
  std::array<double, 4> mode_stderr{};
  Visibility v;
  Visibility v_stderr;
  double normalization = 1;  // quadrature: integral of the Husimi density; MC: mean weight
  Estimator estimator = Estimator::quadrature;
  long samples = 0;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------------------
// Quadrature

namespace detail {

// Monomial prod_j alpha_j^a_j conj(alpha_j)^b_j over the four modes.
using Exponents = std::array<std::uint8_t, 8>;  // a0..a3, b0..b3
using Poly = std::map<Exponents, cplx>;

inline Poly poly_mul(const Poly& x, const Poly& y) {
  Poly r;
  for (const auto& [ex, cx] : x)
    for (const auto& [ey, cy] : y) {
      Exponents e;
      for (int k = 0; k < 8; ++k) e[k] = static_cast<std::uint8_t>(ex[k] + ey[k]);
      r[e] += cx * cy;
    }
  return r;
}
inline Poly poly_conj(const Poly& x) {
  Poly r;
  for (const auto& [e, c] : x) {
    Exponents f;
    for (int k = 0; k < 4; ++k) f[k] = e[k + 4], f[k + 4] = e[k];
    r[f] += std::conj(c);
  }
  return r;
}
// Linear form sum_j (p_j alpha_j + q_j conj(alpha_j)).
inline Poly linear(const std::array<cplx, 4>& p, const std::array<cplx, 4>& q) {
  Poly r;
  for (int j = 0; j < 4; ++j) {
    Exponents e{};
    if (p[j] != cplx(0)) {
      e[j] = 1;
      r[e] += p[j];
      e[j] = 0;
    }
    if (q[j] != cplx(0)) {
      e[j + 4] = 1;
      r[e] += q[j];
    }
  }
  return r;
}

// R(A, B, m) = int_0^inf int_0^inf r^(1+A) q^(1+B) e^(-r^2-q^2) I_m(2 tau r q) dr dq
// with u = r^2, v = q^2 and exponentially scaled Bessel functions.
class RadialIntegrals {
 public:
  RadialIntegrals(double tau, double tol) : tau_(tau), tol_(tol) {}

  double operator()(int a, int b, int m) {
    auto key = std::make_tuple(a, b, m);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double lo = integrate<15>(a, b, m), hi = integrate<31>(a, b, m);
    const double err = std::abs(hi - lo);
    max_error_ = std::max(max_error_, err / std::max(1.0, std::abs(hi)));
    if (err > tol_ * std::max(1.0, std::abs(hi)))
      throw ConvergenceError("radial integral (" + std::to_string(a) + "," + std::to_string(b) + "," +
                                 std::to_string(m) + ") did not converge under node doubling",
                             err);
    return cache_[key] = hi;
  }
  double max_error() const { return max_error_; }

 private:
  static double bessel_scaled(int m, double z) {
    gsl_sf_result r;
    int status = m == 0 ? gsl_sf_bessel_I0_scaled_e(z, &r)
                        : (m == 1 ? gsl_sf_bessel_I1_scaled_e(z, &r) : gsl_sf_bessel_In_scaled_e(m, z, &r));
    if (status != GSL_SUCCESS) throw NumericError("Bessel function evaluation failed");
    return r.val;
  }

  template <unsigned Points>
  double integrate(int a, int b, int m) const {
    using boost::math::quadrature::gauss_kronrod;
    const double tau = tau_;
    const double rel = tol_ * 1e-2;
    // Width of the u-marginal: e^{-(1 - tau^2) u}.
    const double scale = 1.0 / std::max(1e-300, 1 - tau * tau);
    auto inner = [&](double u) {
      auto f = [&](double v) {
        const double z = 2 * tau * std::sqrt(u * v);
        const double e = -u - v + z;
        return std::pow(u, 0.5 * a) * std::pow(v, 0.5 * b) * std::exp(e) * bessel_scaled(m, z);
      };
      const double peak = tau * tau * u;
      const double w = 8 * (1 + std::sqrt(u));
      double s = 0;
      double lo = std::max(0.0, peak - w), hi = peak + w;
      if (lo > 0) s += gauss_kronrod<double, Points>::integrate(f, 0.0, lo, 12, rel);
      s += gauss_kronrod<double, Points>::integrate(f, lo, hi, 12, rel);
      s += gauss_kronrod<double, Points>::integrate(f, hi, std::numeric_limits<double>::infinity(), 12, rel);
      return s;
    };
    double s = 0;
    const std::array<double, 5> cuts{0.0, 0.25 * scale, scale, 4 * scale, 16 * scale};
    for (size_t k = 0; k + 1 < cuts.size(); ++k)
      s += gauss_kronrod<double, Points>::integrate(inner, cuts[k], cuts[k + 1], 12, rel);
    s += gauss_kronrod<double, Points>::integrate(inner, cuts.back(), std::numeric_limits<double>::infinity(), 12, rel);
    return 0.25 * s;
  }

  double tau_, tol_;
  double max_error_ = 0;
  std::map<std::tuple<int, int, int>, double> cache_;
};

// Expectation of a polynomial in (alpha, conj alpha) under the Husimi density of
// c_u |psi1>|psi0> + c_l |psi0>|psi1>, where psi1 / psi0 are |1,0> / |0,0> amplified by
// kappa_c. The phases integrate to Bessel kernels; each term factorizes over the arms.
class HusimiIntegrator {
 public:
  HusimiIntegrator(cplx c_up, cplx c_low, double kappa_c, double tol)
      : zeta_(cplx(0, 1) * std::tanh(kappa_c)), cosh_(std::cosh(kappa_c)), radial_(std::abs(zeta_), tol) {
    // |P|^2 with P = c_u conj(alpha_us) + c_l conj(alpha_ls)
    Poly p = linear({0, 0, 0, 0}, {c_up, 0, c_low, 0});
    weight_ = poly_mul(poly_conj(p), p);
  }

  double expect(const Poly& observable) {
    const Poly integrand = poly_mul(weight_, observable);
    const double psi = std::arg(zeta_);
    cplx total = 0;
    for (const auto& [e, c] : integrand) {
      cplx term = c;
      for (int arm = 0; arm < 2 && term != cplx(0); ++arm) {
        const int as = e[2 * arm], ai = e[2 * arm + 1], bs = e[2 * arm + 4], bi = e[2 * arm + 5];
        const int ms = as - bs, mi = ai - bi;
        if (ms != mi) {
          term = 0;
          break;
        }
        term *= std::polar(1.0, ms * psi) * radial_(as + bs, ai + bi, std::abs(ms));
      }
      total += term;
    }
    return 16.0 * total.real() / std::pow(cosh_, 6);
  }

  double max_error() const { return radial_.max_error(); }

 private:
  cplx zeta_;
  double cosh_;
  RadialIntegrals radial_;
  Poly weight_;
};

}  // namespace detail

// Means of the four detector counts averaged over coherent-state collapse at eta, by
// integrating the Husimi density of the state at the collapse point. Lossless, equal
// amplifiers.
inline CollapseMeans coherent_collapse_means_quadrature(double kappa, double eta, double tol = 1e-8,
                                                        double delta_theta = 0) {
  require(kappa >= 0 && std::isfinite(kappa), "kappa must be >= 0");
  require(eta >= 0 && eta <= 1, "collapse position eta must lie in [0, 1]");
  require(tol > 0, "tolerance must be > 0");
  cplx cu = 0, cl = 0;
  for (const auto& [occ, c] : detail::input_branches(delta_theta)) {
    if (occ == std::array<int, 4>{1, 0, 0, 0}) cu = c;
    if (occ == std::array<int, 4>{0, 0, 1, 0}) cl = c;
  }
  detail::HusimiIntegrator integ(cu, cl, eta * kappa, tol);

  // Classical amplification of the remaining (1 - eta) kappa, then the hybrid.
  const double c = std::cosh((1 - eta) * kappa), s = std::sinh((1 - eta) * kappa);
  const cplx I(0, 1);
  // alpha-bar_j as linear forms: p (alpha coefficients), q (conj alpha coefficients)
  std::array<std::array<cplx, 4>, 4> p{}, q{};
  for (int arm = 0; arm < 2; ++arm) {
    p[2 * arm][2 * arm] = c, q[2 * arm][2 * arm + 1] = I * s;
    p[2 * arm + 1][2 * arm + 1] = c, q[2 * arm + 1][2 * arm] = I * s;
  }
  auto port = [&](int j_up, int j_low, cplx f_up, cplx f_low) {
    std::array<cplx, 4> pp{}, qq{};
    for (int k = 0; k < 4; ++k) {
      pp[k] = (f_up * p[j_up][k] + f_low * p[j_low][k]) / std::sqrt(2.0);
      qq[k] = (f_up * q[j_up][k] + f_low * q[j_low][k]) / std::sqrt(2.0);
    }
    detail::Poly l = detail::linear(pp, qq);
    return detail::poly_mul(detail::poly_conj(l), l);
  };

  CollapseMeans out;
  out.estimator = Estimator::quadrature;
  out.normalization = integ.expect({{detail::Exponents{}, 1.0}});
  if (std::abs(out.normalization - 1) > 10 * tol)
    throw ConvergenceError("Husimi density does not integrate to 1", std::abs(out.normalization - 1));
  out.means.As = integ.expect(port(0, 2, 1, I));
  out.means.Ai = integ.expect(port(1, 3, 1, I));
  out.means.Bs = integ.expect(port(0, 2, I, 1));
  out.means.Bi = integ.expect(port(1, 3, I, 1));
  for (int j = 0; j < 4; ++j) {
    detail::Exponents e{};
    e[j] = 1, e[j + 4] = 1;
    out.mode_means[j] = integ.expect({{e, 1.0}});
  }
  out.v = visibility(out.means);
  return out;
}

// ---------------------------------------------------------------------------------------
// Monte Carlo

namespace detail {

// Husimi first and second moments of a state: mu_j = E[alpha_j],
// M_jk = E[alpha_j conj(alpha_k)] = <a_k^+ a_j> + delta_jk, P_jk = E[alpha_j alpha_k] = <a_j a_k>.
struct HusimiMoments {
  std::array<cplx, 4> mu{};
  Eigen::Matrix4cd M, P;
};

inline HusimiMoments husimi_moments(const SplitState& s) {
  int n = 0;
  for (const auto& t : s.terms) n = std::max({n, t.up.cutoff(), t.low.cutoff()});
  // Arm states may have different cutoffs; build per-cutoff operators lazily.
  std::map<int, std::pair<SpMat, SpMat>> ops;
  auto get = [&](int cut) -> const std::pair<SpMat, SpMat>& {
    auto it = ops.find(cut);
    if (it == ops.end()) {
      SpMat a = single_mode::annihilation(cut).sparseView();
      SpMat ad = single_mode::creation(cut).sparseView();
      it = ops.emplace(cut, std::make_pair(a, ad)).first;
    }
    return it->second;
  };
  const int cu = s.terms.front().up.cutoff(), cl = s.terms.front().low.cutoff();
  for (const auto& t : s.terms)
    require(t.up.cutoff() == cu && t.low.cutoff() == cl, "arm states in a split state must share cutoffs");
  const auto& ou = get(cu);
  const auto& ol = get(cl);
  auto factor = [&](int mode, bool dagger) -> const SpMat* {
    const auto& o = mode < 2 ? ou : ol;
    return dagger ? &o.second : &o.first;
  };
  // Product of two single-mode operators on the same mode needs a combined matrix.
  std::vector<SpMat> keep;
  keep.reserve(32);
  auto two = [&](int j, bool dj, int k, bool dk) {
    SplitState::Factors f{nullptr, nullptr, nullptr, nullptr};
    if (j == k) {
      keep.push_back(SpMat((*factor(j, dj)) * (*factor(k, dk))));
      f[j] = &keep.back();
    } else {
      f[j] = factor(j, dj);
      f[k] = factor(k, dk);
    }
    return s.expect(f);
  };
  HusimiMoments h;
  for (int j = 0; j < 4; ++j) {
    SplitState::Factors f{nullptr, nullptr, nullptr, nullptr};
    f[j] = factor(j, false);
    h.mu[j] = s.expect(f);
  }
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      h.M(j, k) = two(k, true, j, false) + (j == k ? 1.0 : 0.0);
      h.P(j, k) = two(j, false, k, false);
    }
  return h;
}

inline HusimiMoments husimi_moments(const QuantumState& s) {
  const auto& L = s.layout();
  require(L.num_modes() == 4, "Husimi moments need the four interferometer modes");
  const std::array<Mode, 4> modes{up_s, up_i, low_s, low_i};
  HusimiMoments h;
  for (int j = 0; j < 4; ++j) h.mu[j] = expectation(s, annihilation(L, modes[j]));
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      h.M(j, k) = expectation(s, creation(L, modes[k]) * annihilation(L, modes[j])) + (j == k ? 1.0 : 0.0);
      h.P(j, k) = expectation(s, annihilation(L, modes[j]) * annihilation(L, modes[k]));
    }
  return h;
}

// Real 8x8 covariance of (Re alpha_0, Im alpha_0, ...).
inline Eigen::Matrix<double, 8, 8> real_covariance(const HusimiMoments& h) {
  Eigen::Matrix<double, 8, 8> c;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      const cplx mc = h.M(j, k) - h.mu[j] * std::conj(h.mu[k]);
      const cplx pc = h.P(j, k) - h.mu[j] * h.mu[k];
      c(2 * j, 2 * k) = 0.5 * (mc + pc).real();
      c(2 * j + 1, 2 * k + 1) = 0.5 * (mc - pc).real();
      c(2 * j + 1, 2 * k) = 0.5 * (mc + pc).imag();
      c(2 * j, 2 * k + 1) = 0.5 * (pc - mc).imag();
    }
  return 0.5 * (c + c.transpose());
}

struct Accumulator {
  // 0..3 detector counts, 4..7 |alpha_j|^2
  static constexpr int K = 8;
  double n = 0, sw = 0, sw2 = 0;
  std::array<double, K> swf{}, sw2f{}, sw2f2{};
  // cross terms for the visibility ratios: (Bs, As), (Ai, Bi)
  double sw2_bs_as = 0, sw2_ai_bi = 0;

  void add(double w, const std::array<double, K>& f) {
    n += 1, sw += w, sw2 += w * w;
    for (int k = 0; k < K; ++k) swf[k] += w * f[k], sw2f[k] += w * w * f[k], sw2f2[k] += w * w * f[k] * f[k];
    sw2_bs_as += w * w * f[2] * f[0];
    sw2_ai_bi += w * w * f[1] * f[3];
  }
  void merge(const Accumulator& o) {
    n += o.n, sw += o.sw, sw2 += o.sw2;
    for (int k = 0; k < K; ++k) swf[k] += o.swf[k], sw2f[k] += o.sw2f[k], sw2f2[k] += o.sw2f2[k];
    sw2_bs_as += o.sw2_bs_as, sw2_ai_bi += o.sw2_ai_bi;
  }
};

template <class Amplitude>
CollapseMeans coherent_mc(const Amplitude& overlap, const HusimiMoments& mom, double kappa_up, double kappa_low,
                          double eta, long samples, std::uint64_t seed, unsigned jobs) {
  require(samples > 0, "sample count must be > 0");
  constexpr double inflate = 1.5;
  const Eigen::Matrix<double, 8, 8> cov = inflate * real_covariance(mom);
  Eigen::LLT<Eigen::Matrix<double, 8, 8>> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("degenerate Monte Carlo proposal (covariance not positive)");
  const Eigen::Matrix<double, 8, 8> chol = llt.matrixL();
  Eigen::Matrix<double, 8, 1> mean;
  for (int j = 0; j < 4; ++j) mean(2 * j) = mom.mu[j].real(), mean(2 * j + 1) = mom.mu[j].imag();
  const double log_det = 2 * chol.diagonal().array().log().sum();
  // Husimi density = |<alpha|psi>|^2 / pi^4; proposal density is N(mean, cov).
  const double log_norm_g = -4 * std::log(2 * std::numbers::pi) - 0.5 * log_det;
  const double log_pi4 = 4 * std::log(std::numbers::pi);

  constexpr long chunks = 64;
  std::vector<Accumulator> acc(chunks);
  parallel_for(chunks, jobs, [&](size_t c) {
    const long begin = samples * static_cast<long>(c) / chunks, end = samples * static_cast<long>(c + 1) / chunks;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss;
    Eigen::Matrix<double, 8, 1> z;
    for (long i = begin; i < end; ++i) {
      for (int k = 0; k < 8; ++k) z(k) = gauss(rng);
      const Eigen::Matrix<double, 8, 1> x = mean + chol * z;
      CoherentPoint pt;
      for (int j = 0; j < 4; ++j) pt.alpha[j] = cplx(x(2 * j), x(2 * j + 1));
      const double q = overlap(pt);
      const double log_g = log_norm_g - 0.5 * z.squaredNorm();
      const double w = q > 0 ? std::exp(std::log(q) - log_pi4 - log_g) : 0.0;
      const DetectorMeans d = detector_counts(evolve_amplitudes(pt, kappa_up, kappa_low, eta));
      std::array<double, Accumulator::K> f{d.As, d.Ai, d.Bs, d.Bi};
      for (int j = 0; j < 4; ++j) f[4 + j] = std::norm(pt.alpha[j]);
      acc[c].add(w, f);
    }
  });
  Accumulator tot;
  for (const auto& a : acc) tot.merge(a);
  if (!(tot.sw > 0)) throw NumericError("degenerate Monte Carlo proposal (all importance weights vanish)");

  // Self-normalized estimates with delta-method standard errors.
  std::array<double, Accumulator::K> est{}, se{};
  for (int k = 0; k < Accumulator::K; ++k) {
    est[k] = tot.swf[k] / tot.sw;
    const double v = tot.sw2f2[k] - 2 * est[k] * tot.sw2f[k] + est[k] * est[k] * tot.sw2;
    se[k] = std::sqrt(std::max(0.0, v)) / tot.sw;
  }
  CollapseMeans out;
  out.estimator = Estimator::monte_carlo;
  out.samples = samples;
  out.seed = seed;
  out.normalization = tot.sw / tot.n;
  out.means = {est[0], est[1], est[2], est[3]};
  out.stderr_means = {se[0], se[1], se[2], se[3]};
  for (int j = 0; j < 4; ++j) out.mode_means[j] = est[4 + j], out.mode_stderr[j] = se[4 + j];
  out.v = visibility(out.means);
  // V = (x - y) / (x + y) with x, y ratio estimates sharing the weights.
  auto vis_se = [&](int ix, int iy, double sxy) {
    const double x = est[ix], y = est[iy], s = x + y;
    if (!(s > 0)) return std::optional<double>();
    const double gx = 2 * y / (s * s), gy = -2 * x / (s * s);
    // residual r_i = gx (f_x - x) + gy (f_y - y)
    const double sxx = tot.sw2f2[ix] - 2 * x * tot.sw2f[ix] + x * x * tot.sw2;
    const double syy = tot.sw2f2[iy] - 2 * y * tot.sw2f[iy] + y * y * tot.sw2;
    const double cxy = sxy - x * tot.sw2f[iy] - y * tot.sw2f[ix] + x * y * tot.sw2;
    const double var = gx * gx * sxx + gy * gy * syy + 2 * gx * gy * cxy;
    return std::optional<double>(std::sqrt(std::max(0.0, var)) / tot.sw);
  };
  out.v_stderr.signal = vis_se(2, 0, tot.sw2_bs_as);
  out.v_stderr.idler = vis_se(1, 3, tot.sw2_ai_bi);
  return out;
}

}  // namespace detail

// Importance-sampled coherent-collapse means from a four-mode pure state at the collapse
// point. kappa is the total amplification; (1 - eta) kappa remains after the collapse.
inline CollapseMeans coherent_collapse_means_mc(const QuantumState& at_collapse, double kappa, double eta,
                                                long samples, std::uint64_t seed, unsigned jobs = 1) {
  require(at_collapse.is_pure(), "Monte Carlo collapse needs a pure state at the collapse point");
  const auto mom = detail::husimi_moments(at_collapse);
  auto f = [&](const CoherentPoint& p) { return coherent_overlap(at_collapse, p); };
  return detail::coherent_mc(f, mom, kappa, kappa, eta, samples, seed, jobs);
}

// Same estimator on an arm-product representation; reaches large amplification.
inline CollapseMeans coherent_collapse_means_mc(const SplitState& at_collapse, double kappa, double eta, long samples,
                                                std::uint64_t seed, unsigned jobs = 1) {
  const auto mom = detail::husimi_moments(at_collapse);
  struct Sparse {
    std::vector<ArmState::Entry> up, low;
    cplx w;
  };
  std::vector<Sparse> terms;
  for (const auto& t : at_collapse.terms) terms.push_back({t.up.entries(), t.low.entries(), t.weight});
  const int cu = at_collapse.terms.front().up.cutoff(), cl = at_collapse.terms.front().low.cutoff();
  auto f = [&](const CoherentPoint& p) {
    const Vec us = coherent_bra(p.alpha[0], cu), ui = coherent_bra(p.alpha[1], cu);
    const Vec ls = coherent_bra(p.alpha[2], cl), li = coherent_bra(p.alpha[3], cl);
    cplx s = 0;
    for (const auto& t : terms) {
      cplx a = 0, b = 0;
      for (const auto& e : t.up) a += e.c * us[e.n] * ui[e.m];
      for (const auto& e : t.low) b += e.c * ls[e.n] * li[e.m];
      s += t.w * a * b;
    }
    return std::norm(s);
  };
  return detail::coherent_mc(f, mom, kappa, kappa, eta, samples, seed, jobs);
}

// Four-mode pure state after h1, phase shift and eta * kappa of amplification.
inline QuantumState state_at_collapse(double kappa, double eta, int cutoff = 0, double delta_theta = 0) {
  require(eta >= 0 && eta <= 1, "collapse position eta must lie in [0, 1]");
  const double k = eta * kappa;
  const HilbertLayout L = HilbertLayout::interferometer(cutoff > 0 ? cutoff : cutoff_rule(k, 1e-12));
  QuantumState s = make_fock(L, {1, 0, 0, 0});
  s = evolve_unitary(s, build_hamiltonian(ComponentSpec::hybrid(1.0), L), 1.0);
  s = evolve_unitary(s, build_hamiltonian(ComponentSpec::phase_shifter(delta_theta, 1.0, ArmScope::up), L), 1.0);
  ModeOperator amp = build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 1.0), L) +
                     build_hamiltonian(ComponentSpec::twpa(k, ArmScope::low, 1.0), L);
  return evolve_unitary(s, amp, 1.0);
}

// ---------------------------------------------------------------------------------------
// Number-state collapse

struct NumberCollapseResult {
  DetectorMeans means;
  Visibility v;
  // Born-weighted <a+_up a_low - a_up a+_low> per species (signal, idler)
  std::array<cplx, 2> cross{};
  double probability = 0;  // total Born weight covered
  double tail = 0;         // Born-weighted top-two-level population after the second stage
};

inline NumberCollapseResult number_collapse(const ExperimentConfig& cfg, double eta, double prob_floor = 1e-16) {
  require(eta >= 0 && eta <= 1, "collapse position eta must lie in [0, 1]");
  require(!cfg.lossy(), "number-state collapse is evaluated for the lossless interferometer");
  const SplitState at = split_state_at_collapse(cfg.kappa_up, cfg.kappa_low, eta, cfg.delta_theta);
  const double ku = (1 - eta) * cfg.kappa_up, kl = (1 - eta) * cfg.kappa_low;
  // The second stage must hold the collapsed photons plus the fresh amplification.
  const int cu0 = at.terms.front().up.cutoff(), cl0 = at.terms.front().low.cutoff();
  detail::ArmEvolver up(ku, cu0 + cutoff_rule(ku, 1e-12));
  detail::ArmEvolver low(kl, cl0 + cutoff_rule(kl, 1e-12));

  // Born probabilities of |n_us, n_ui, n_ls, n_li>.
  std::map<std::array<int, 4>, cplx> amp;
  for (const auto& t : at.terms)
    for (const auto& a : t.up.entries())
      for (const auto& b : t.low.entries()) amp[{a.n, a.m, b.n, b.m}] += t.weight * a.c * b.c;

  const SpMat au = single_mode::annihilation(up.cutoff()).sparseView();
  const SpMat al = single_mode::annihilation(low.cutoff()).sparseView();
  const SpMat nu = single_mode::number(up.cutoff()).sparseView();
  const SpMat nl = single_mode::number(low.cutoff()).sparseView();

  NumberCollapseResult r;
  double nB[2] = {0, 0}, nA[2] = {0, 0};
  for (const auto& [occ, c] : amp) {
    const double p = std::norm(c);
    if (p < prob_floor) continue;
    r.probability += p;
    const ArmState& x = up.evolve(occ[0], occ[1]);
    const ArmState& y = low.evolve(occ[2], occ[3]);
    auto edge = [](const ArmState& a) {
      const int n = a.cutoff();
      double e = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (i >= n - 2 || j >= n - 2) e += std::norm(a.amp(i, j));
      return e;
    };
    r.tail += p * std::max(edge(x), edge(y));
    for (int sp = 0; sp < 2; ++sp) {
      const SpMat* su = sp == 0 ? &au : nullptr;
      const SpMat* iu = sp == 0 ? nullptr : &au;
      const SpMat* sl = sp == 0 ? &al : nullptr;
      const SpMat* il = sp == 0 ? nullptr : &al;
      const double n_up = SplitState::arm_element(x, x, sp == 0 ? &nu : nullptr, sp == 0 ? nullptr : &nu).real();
      const double n_low = SplitState::arm_element(y, y, sp == 0 ? &nl : nullptr, sp == 0 ? nullptr : &nl).real();
      // <a_up> and <a_low> on the product state
      const cplx a_up = SplitState::arm_element(x, x, su, iu);
      const cplx a_low = SplitState::arm_element(y, y, sl, il);
      const cplx cross = std::conj(a_up) * a_low - a_up * std::conj(a_low);  // <a+_up a_low - a_up a+_low>
      r.cross[sp] += p * cross;
      // n_B = (n_up + n_low)/2 + Im<a+_up a_low>, n_A = (n_up + n_low)/2 - Im<a+_up a_low>
      const double im = (std::conj(a_up) * a_low).imag();
      nB[sp] += p * (0.5 * (n_up + n_low) + im);
      nA[sp] += p * (0.5 * (n_up + n_low) - im);
    }
  }
  r.means = {nA[0], nA[1], nB[0], nB[1]};
  r.v = visibility(r.means);
  return r;
}

inline Visibility number_collapse_visibility(const ExperimentConfig& cfg, double eta) {
  return number_collapse(cfg, eta).v;
}

// ---------------------------------------------------------------------------------------
// Stochastic collapse position

// <n> = int pdf(eta) <n_coll(eta)> d eta + (1 - mass) <n_q>
inline DetectorMeans stochastic_mix(const PositionPdf& pdf, const std::function<DetectorMeans(double)>& collapse,
                                    const DetectorMeans& quantum) {
  pdf.validate();
  DetectorMeans m;
  auto add = [&](const DetectorMeans& d, double w) {
    m.As += w * d.As, m.Ai += w * d.Ai, m.Bs += w * d.Bs, m.Bi += w * d.Bi;
  };
  using boost::math::quadrature::gauss;
  for (size_t k = 0; k + 1 < pdf.knots.size(); ++k) {
    const double a = pdf.knots[k], b = pdf.knots[k + 1];
    if (pdf.density[k] == 0 && pdf.density[k + 1] == 0) continue;
    const double h = b - a;
    // Gauss-Legendre nodes on [a, b]
    for (size_t i = 0; i < gauss<double, 10>::abscissa().size(); ++i) {
      const double x = gauss<double, 10>::abscissa()[i], w = gauss<double, 10>::weights()[i];
      for (double sgn : {-1.0, 1.0}) {
        if (x == 0 && sgn > 0) continue;
        const double eta = a + 0.5 * h * (1 + sgn * x);
        const double dens = pdf.density[k] + (pdf.density[k + 1] - pdf.density[k]) * (eta - a) / h;
        add(collapse(eta), 0.5 * h * w * dens);
      }
    }
  }
  for (const auto& [eta, w] : pdf.atoms)
    if (w > 0) add(collapse(eta), w);
  add(quantum, 1 - pdf.mass());
  return m;
}

}  // namespace twpa
