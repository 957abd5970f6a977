#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "twpa/twpa.hpp"

using namespace twpa;

namespace {

FullRun full(double k, double kp, double dtheta, int cutoff) {
  ExperimentConfig c;
  c.kappa_up = k;
  c.kappa_low = kp;
  c.delta_theta = dtheta;
  c.cutoff = cutoff;
  return run_full(c);
}

}  // namespace

TEST(AmpOutput, Examples) {
  const double k = 0.7, c2 = std::pow(std::cosh(k), 2), s2 = std::pow(std::sinh(k), 2);
  auto [s1, i1] = lossless_amp_output(1, 0, k);
  EXPECT_DOUBLE_EQ(s1, c2 + s2);
  EXPECT_DOUBLE_EQ(i1, 2 * s2);
  auto [s0, i0] = lossless_amp_output(0, 0, k);
  EXPECT_DOUBLE_EQ(s0, s2);
  EXPECT_DOUBLE_EQ(i0, s2);
  auto [a, b] = lossless_amp_output(3, 2, 0);
  EXPECT_DOUBLE_EQ(a, 3);
  EXPECT_DOUBLE_EQ(b, 2);
  EXPECT_THROW(lossless_amp_output(-1, 0, k), ConfigError);
}

TEST(LosslessVisibility, Examples) {
  EXPECT_NEAR(*lossless_visibility(20).signal, 1.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(*lossless_visibility(0).signal, 1.0);
  EXPECT_FALSE(lossless_visibility(0).idler.has_value());
  EXPECT_NEAR(*lossless_visibility(1).signal, 0.4630, 1e-4);
  EXPECT_NEAR(*lossless_visibility(1).signal, *run_full(ExperimentConfig{1.0, 1.0}).result.v.signal, 1e-6);
}

TEST(TwpaFock, VacuumSchmidtCoefficients) {
  const double k = 0.8;
  auto e = twpa_fock_evolution(0, k, 60);
  EXPECT_LT(e.tail(), 1e-10);
  const double t2 = std::pow(std::tanh(k), 2), c2 = std::pow(std::cosh(k), 2);
  double sum = 0;
  for (int n = 0; n < 60; ++n) {
    const double p = std::pow(t2, n) / c2;
    EXPECT_NEAR(std::norm(e.amplitude({n, n})), p, 1e-14);
    sum += p;
  }
  EXPECT_NEAR(sum, 1.0, 1e-10);
}

TEST(TwpaFock, SinglePhotonLeadingCoefficient) {
  const double k = 0.4;
  auto e = twpa_fock_evolution(1, k, 40);
  EXPECT_NEAR(std::abs(e.amplitude({1, 0}) - 1 / std::pow(std::cosh(k), 2)), 0, 1e-15);
}

TEST(TwpaFock, MatchesMatrixExponential) {
  const double k = 0.6;
  const auto L = HilbertLayout::single_arm(45);
  auto h = build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 1e-9), L);
  for (int ns : {0, 1, 2}) {
    auto e = twpa_fock_evolution(ns, k, 45);
    auto s = evolve_unitary(make_fock(L, {ns, 0}), h, 1e-9);
    EXPECT_LT((e.to_state(L).vector() - s.vector()).norm(), 1e-10) << ns;
  }
}

TEST(TwpaFock, TailAboveBoundThrows) { EXPECT_THROW(twpa_fock_evolution(1, 1.5, 6), TruncationError); }

TEST(Degenerate, SqueezedVacuumHasEvenParity) {
  auto e = degenerate_evolution(0, 0.4, 0.0, 80);
  for (const auto& t : e.terms) EXPECT_EQ(t.occ[0] % 2, 0);
  auto one = degenerate_evolution(1, 0.4, 0.0, 80);
  for (const auto& t : one.terms) EXPECT_EQ(t.occ[0] % 2, 1);
}

TEST(Degenerate, MeanMatchesMatrixEvolution) {
  const double k = 0.35;
  const HilbertLayout L({up_s}, 140);
  for (double phi : {0.0, 1.3}) {
    auto h = build_hamiltonian(ComponentSpec::degenerate(k, phi, ArmScope::up, 1e-9), L);
    for (int ns : {0, 1, 2}) {
      auto e = degenerate_evolution(ns, k, phi, 140);
      auto s = evolve_unitary(make_fock(L, {ns}), h, 1e-9);
      EXPECT_LT((e.to_state(L).vector() - s.vector()).norm(), 1e-10) << ns << " " << phi;
      // <n> = N cosh(4k) + sinh^2(2k) for a number-state input
      EXPECT_NEAR(e.mean_number(0), ns * std::cosh(4 * k) + std::pow(std::sinh(2 * k), 2), 1e-9);
    }
  }
}

TEST(Degenerate, SqueezingAxisRotatesWithPumpPhase) {
  const double k = 0.3;
  const double base = squeezing_axis(degenerate_evolution(0, k, 0.0, 80));
  for (double phi : {0.5, 1.0, 2.0}) {
    double d = squeezing_axis(degenerate_evolution(0, k, phi, 80)) - base;
    d = std::remainder(d, std::numbers::pi);
    EXPECT_NEAR(d, phi / 2, 1e-9) << phi;
  }
}

TEST(Degenerate, ArmExchangeSymmetryAtEqualPumpPhase) {
  const HilbertLayout L({up_s, low_s}, 30);
  auto s = evolve_unitary(make_fock(L, {1, 0}), build_hamiltonian(ComponentSpec::hybrid(1e-9), L), 1e-9);
  auto amp = build_hamiltonian(ComponentSpec::degenerate(0.3, 0.0, ArmScope::up, 1e-9), L) +
             build_hamiltonian(ComponentSpec::degenerate(0.3, 0.0, ArmScope::low, 1e-9), L);
  s = evolve_unitary(s, amp, 1e-9);
  auto d = number_distribution(s);
  for (int a = 0; a < 30; ++a)
    for (int b = 0; b < a; ++b) EXPECT_NEAR(d.at({a, b}), d.at({b, a}), 1e-12);
}

TEST(DegenerateVisibility, NoGain) {
  auto v = degenerate_visibility(0, 0);
  EXPECT_NEAR(v.quantum, 1.0, 1e-12);
  EXPECT_NEAR(v.collapse, 1.0 / 3, 1e-12);
}

TEST(DegenerateVisibility, CollapseApproachesQuantumCurve) {
  double prev = 1e9;
  for (double k : {0.25, 0.5, 0.75, 1.0}) {
    auto v = degenerate_visibility(k, 0);
    const double gap = std::abs(v.quantum - v.collapse);
    EXPECT_LT(gap, prev) << k;
    EXPECT_LE(v.collapse, v.quantum + 1e-12);
    prev = gap;
  }
}

TEST(DegenerateVisibility, PumpPhaseDifferenceIsPeriodic) {
  const double k = 0.3;
  const double v0 = degenerate_visibility(k, 0).quantum;
  EXPECT_NEAR(v0, degenerate_visibility(k, 2 * std::numbers::pi).quantum, 1e-10);
  EXPECT_GT(std::abs(degenerate_visibility(k, std::numbers::pi).quantum - v0), 0.1);
}

TEST(OutputState, NoGainIsMachZehnder) {
  for (double th : {0.0, 0.9, 2.0}) {
    auto m = expansion_means(analytic_output_state(0, 0, th, 4));
    EXPECT_NEAR(m.Bs, std::pow(std::cos(th / 2), 2), 1e-14);
    EXPECT_NEAR(m.As, std::pow(std::sin(th / 2), 2), 1e-14);
  }
}

TEST(OutputState, MeansMatchFullRun) {
  auto e = analytic_output_state(0.5, 0.5, 0.0, 30);
  EXPECT_LT(e.tail(), 1e-10);
  auto r = full(0.5, 0.5, 0.0, 22).result;
  auto m = expansion_means(e);
  EXPECT_NEAR(m.As, r.means.As, 1e-8);
  EXPECT_NEAR(m.Ai, r.means.Ai, 1e-8);
  EXPECT_NEAR(m.Bs, r.means.Bs, 1e-8);
  EXPECT_NEAR(m.Bi, r.means.Bi, 1e-8);
}

TEST(OutputState, UnequalGainAndPhaseMatchFullRun) {
  auto e = analytic_output_state(0.4, 0.25, 0.7, 30);
  auto r = full(0.4, 0.25, 0.7, 16).result;
  auto m = expansion_means(e);
  EXPECT_NEAR(m.As, r.means.As, 1e-7);
  EXPECT_NEAR(m.Ai, r.means.Ai, 1e-7);
  EXPECT_NEAR(m.Bs, r.means.Bs, 1e-7);
  EXPECT_NEAR(m.Bi, r.means.Bi, 1e-7);
}

TEST(OutputState, VisibilitiesMatchClosedForm) {
  for (double k : {0.2, 0.5, 0.8}) {
    auto e = analytic_output_state(k, k, 0.0, 40, 1e-8);
    auto v = visibility(expansion_means(e));
    EXPECT_NEAR(*v.signal, *lossless_visibility(k).signal, 1e-7) << k;
    EXPECT_NEAR(*v.idler, 1.0 / 3, 1e-7) << k;
  }
}

TEST(OutputState, NormalizationWithinTail) {
  auto e = analytic_output_state(0.3, 0.3, 0.0, 20);
  EXPECT_LE(e.norm2(), 1 + 1e-12);
  EXPECT_LT(e.tail(), 1e-10);
  EXPECT_THROW(analytic_output_state(0.8, 0.8, 0, 5), TruncationError);
}
