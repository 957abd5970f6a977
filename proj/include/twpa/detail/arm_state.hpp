#pragma once

#include <array>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "twpa/dynamics.hpp"
#include "twpa/fock.hpp"

namespace twpa {

// Pure state of one arm's signal/idler pair; amp(n, m) is the amplitude of |n_s = n, n_i = m>.
struct ArmState {
  Mat amp;

  int cutoff() const { return static_cast<int>(amp.rows()); }

  struct Entry {
    int n, m;
    cplx c;
  };
  std::vector<Entry> entries() const {
    std::vector<Entry> e;
    for (Eigen::Index m = 0; m < amp.cols(); ++m)
      for (Eigen::Index n = 0; n < amp.rows(); ++n)
        if (amp(n, m) != cplx(0)) e.push_back({static_cast<int>(n), static_cast<int>(m), amp(n, m)});
    return e;
  }

  static ArmState from_state(const QuantumState& s) {
    const auto& L = s.layout();
    require(s.is_pure() && L.num_modes() == 2, "arm state needs a pure two-mode state");
    const int n = L.cutoff();
    const size_t ps = L.modes()[0].species == Species::signal ? 0 : 1;
    ArmState a{Mat::Zero(n, n)};
    for (size_t i = 0; i < L.dimension(); ++i)
      a.amp(L.occupation(i, ps), L.occupation(i, 1 - ps)) = s.vector()[static_cast<Eigen::Index>(i)];
    return a;
  }
};

// sum_t weight_t |up_t> |low_t>, modes ordered (up,s), (up,i), (low,s), (low,i).
struct SplitState {
  struct Term {
    cplx weight;
    ArmState up, low;
  };
  std::vector<Term> terms;

  // Single-mode factors per mode (nullptr = identity) for an expectation value.
  using Factors = std::array<const SpMat*, 4>;

  cplx expect(const Factors& f) const {
    cplx total = 0;
    for (const auto& a : terms)
      for (const auto& b : terms) {
        const cplx w = std::conj(a.weight) * b.weight;
        if (w == cplx(0)) continue;
        total += w * arm_element(a.up, b.up, f[0], f[1]) * arm_element(a.low, b.low, f[2], f[3]);
      }
    return total;
  }

  double norm2() const { return expect({nullptr, nullptr, nullptr, nullptr}).real(); }

  // <x| Os (x) Oi |y>
  static cplx arm_element(const ArmState& x, const ArmState& y, const SpMat* os, const SpMat* oi) {
    Mat t = y.amp;
    if (os) t = (*os * t).eval();
    if (oi) t = (t * SpMat(oi->transpose())).eval();
    return (x.amp.conjugate().cwiseProduct(t)).sum();
  }
};

namespace detail {

// TWPA evolution of arm basis states, cached by input occupation.
class ArmEvolver {
 public:
  ArmEvolver(double kappa, int cutoff) : layout_(HilbertLayout::single_arm(cutoff)), kappa_(kappa) {
    if (kappa_ > 0) h_ = build_hamiltonian(ComponentSpec::twpa(kappa_, ArmScope::up, 1.0), layout_);
  }
  const ArmState& evolve(int ns, int ni) {
    auto key = std::make_pair(ns, ni);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    QuantumState s = make_fock(layout_, {ns, ni});
    if (kappa_ > 0) s = evolve_unitary(s, h_, 1.0);
    return cache_.emplace(key, ArmState::from_state(s)).first->second;
  }
  int cutoff() const { return layout_.cutoff(); }

 private:
  HilbertLayout layout_;
  double kappa_;
  ModeOperator h_;
  std::map<std::pair<int, int>, ArmState> cache_;
};

// Amplitudes of h1 followed by the phase shifter on |1,0,0,0>, keyed by occupations.
inline std::vector<std::pair<std::array<int, 4>, cplx>> input_branches(double delta_theta) {
  const auto L = HilbertLayout::interferometer(2);
  QuantumState s = make_fock(L, {1, 0, 0, 0});
  s = evolve_unitary(s, build_hamiltonian(ComponentSpec::hybrid(1.0), L), 1.0);
  s = evolve_unitary(s, build_hamiltonian(ComponentSpec::phase_shifter(delta_theta, 1.0, ArmScope::up), L), 1.0);
  std::vector<std::pair<std::array<int, 4>, cplx>> out;
  for (size_t i = 0; i < L.dimension(); ++i) {
    const cplx c = s.vector()[static_cast<Eigen::Index>(i)];
    if (std::abs(c) < 1e-15) continue;
    auto o = L.occupations(i);
    out.push_back({{o[0], o[1], o[2], o[3]}, c});
  }
  return out;
}

// Smallest two-mode cutoff for which the amplified |1,0> leaves less than `target` above it.
inline int arm_cutoff(double kappa, double target) {
  if (kappa == 0) return 3;
  const double c2 = std::cosh(kappa) * std::cosh(kappa), t2 = std::tanh(kappa) * std::tanh(kappa);
  // P(n_i >= k) for the |1,0> input: sum_{n>=k} (n+1) t^{2n} / c^4
  for (int k = 2;; ++k) {
    const double tail = std::pow(t2, k) * (k + 1 - k * t2) / ((1 - t2) * (1 - t2) * c2 * c2);
    if (tail < target) return k + 2;
    if (k > 20000) throw ConfigError("amplification too large for the arm-state cutoff");
  }
}

}  // namespace detail

// State right after h1, phase shift and an amplification eta * kappa in each arm.
inline SplitState split_state_at_collapse(double kappa_up, double kappa_low, double eta, double delta_theta = 0,
                                          double tail_target = 1e-14) {
  require(eta >= 0 && eta <= 1, "collapse position eta must lie in [0, 1]");
  const double ku = eta * kappa_up, kl = eta * kappa_low;
  detail::ArmEvolver up(ku, detail::arm_cutoff(ku, tail_target));
  detail::ArmEvolver low(kl, detail::arm_cutoff(kl, tail_target));
  SplitState s;
  for (const auto& [occ, c] : detail::input_branches(delta_theta))
    s.terms.push_back({c, up.evolve(occ[0], occ[1]), low.evolve(occ[2], occ[3])});
  return s;
}

}  // namespace twpa
