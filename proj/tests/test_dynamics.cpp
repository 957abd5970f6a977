#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "twpa/twpa.hpp"

using namespace twpa;

namespace {

constexpr double ghz5 = 2 * std::numbers::pi * 5e9;

double bose(double omega, double t) {
  const double hbar = 1.054571817e-34, kb = 1.380649e-23;
  return 1.0 / (std::exp(hbar * omega / (kb * t)) - 1.0);
}

}  // namespace

TEST(Hamiltonian, HybridMapsPhotonToSuperposition) {
  const HilbertLayout L({up_s, low_s}, 3);
  auto s = evolve_unitary(make_fock(L, {1, 0}), build_hamiltonian(ComponentSpec::hybrid(2e-9), L), 2e-9);
  const cplx a10 = s.vector()[L.index({1, 0})], a01 = s.vector()[L.index({0, 1})];
  EXPECT_NEAR(std::abs(a10 - 1 / std::sqrt(2.0)), 0, 1e-12);
  EXPECT_NEAR(std::abs(a01 - cplx(0, 1) / std::sqrt(2.0)), 0, 1e-12);
}

TEST(Hamiltonian, PhaseShifterAppliesExactPhase) {
  const HilbertLayout L({up_s}, 3);
  for (double th : {0.3, 1.7, -2.5}) {
    auto s = evolve_unitary(make_fock(L, {1}), build_hamiltonian(ComponentSpec::phase_shifter(th, 1e-9), L), 1e-9);
    EXPECT_NEAR(std::abs(s.vector()[1] - std::polar(1.0, th)), 0, 1e-12);
  }
}

TEST(Hamiltonian, VacuumAmplificationGivesSinhSquared) {
  const auto L = HilbertLayout::single_arm(25);
  auto s = evolve_unitary(vacuum(L), build_hamiltonian(ComponentSpec::twpa(0.3, ArmScope::up, 5e-9), L), 5e-9);
  EXPECT_NEAR(mean_number(s, up_s), std::pow(std::sinh(0.3), 2), 1e-12);
  EXPECT_NEAR(mean_number(s, up_s) / 0.0931, 1.0, 5e-3);
}

TEST(Hamiltonian, AllGeneratorsHermitian) {
  const auto L = HilbertLayout::interferometer(5);
  for (const auto& spec :
       {ComponentSpec::hybrid(1e-9), ComponentSpec::phase_shifter(0.7, 1e-9), ComponentSpec::twpa(0.9, ArmScope::low, 5e-9),
        ComponentSpec::degenerate(0.4, 1.1, ArmScope::up, 5e-9), ComponentSpec::idle(1e-9)}) {
    auto h = build_hamiltonian(spec, L);
    SpMat m = h.sparse();
    const double scale = std::max(1.0, m.norm());
    EXPECT_LT(h.hermiticity_defect() / scale, 1e-12) << to_string(spec.kind);
  }
}

TEST(Hamiltonian, MissingArmRejected) {
  const HilbertLayout L({up_s, up_i}, 3);
  EXPECT_THROW(build_hamiltonian(ComponentSpec::twpa(0.3, ArmScope::low, 1e-9), L), ConfigError);
  EXPECT_THROW(build_hamiltonian(ComponentSpec::hybrid(1e-9), L), ConfigError);
  EXPECT_THROW(build_hamiltonian(ComponentSpec{ComponentKind::twpa, 1e-9, 0.3, 0, ArmScope::both}, L), ConfigError);
}

TEST(EvolveUnitary, ZeroGeneratorIsIdentity) {
  const auto L = HilbertLayout::interferometer(3);
  Vec v = Vec::Random(81);
  v.normalize();
  QuantumState s(L, v);
  auto out = evolve_unitary(s, ModeOperator(L), 1e-9);
  EXPECT_LT((out.vector() - v).norm(), 1e-15);
}

TEST(EvolveUnitary, AmplifierFockCoefficients) {
  const double k = 0.6;
  const auto L = HilbertLayout::single_arm(30);
  auto s = evolve_unitary(make_fock(L, {1, 0}), build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 5e-9), L), 5e-9);
  const double c2 = std::pow(std::cosh(k), 2);
  for (int n = 0; n < 10; ++n) {
    const cplx expect = std::pow(cplx(0, std::tanh(k)), n) * std::sqrt(n + 1.0) / c2;
    EXPECT_NEAR(std::abs(s.vector()[L.index({n + 1, n})] - expect), 0, 1e-10) << n;
  }
}

TEST(EvolveUnitary, MatchesTaylorOracle) {
  const auto L = HilbertLayout::interferometer(5);
  auto h = build_hamiltonian(ComponentSpec::twpa(0.4, ArmScope::up, 5e-9), L) +
           build_hamiltonian(ComponentSpec::hybrid(5e-9), L) +
           build_hamiltonian(ComponentSpec::phase_shifter(0.9, 5e-9), L);
  Vec v = Vec::Random(625);
  v.normalize();
  auto out = evolve_unitary(QuantumState(L, v), h, 5e-9);
  EXPECT_LT((out.vector() - oracle::taylor_expm(h.sparse(), v, 5e-9)).norm(), 1e-10);
}

TEST(EvolveUnitary, GeneratorAdditivity) {
  const auto L = HilbertLayout::interferometer(8);
  const double k = 0.5;
  Vec v = Vec::Random(static_cast<Eigen::Index>(L.dimension()));
  // keep the random state away from the truncation edge
  for (size_t i = 0; i < L.dimension(); ++i)
    for (int o : L.occupations(i))
      if (o > 2) v[static_cast<Eigen::Index>(i)] = 0;
  v.normalize();
  QuantumState s(L, v);
  for (double eta : {0.25, 0.5, 0.8}) {
    auto h = [&](double kk) {
      return build_hamiltonian(ComponentSpec::twpa(kk, ArmScope::up, 1e-9), L) +
             build_hamiltonian(ComponentSpec::twpa(kk, ArmScope::low, 1e-9), L);
    };
    auto two = evolve_unitary(evolve_unitary(s, h(eta * k), 1e-9), h((1 - eta) * k), 1e-9);
    auto one = evolve_unitary(s, h(k), 1e-9);
    EXPECT_LT((two.vector() - one.vector()).norm(), 1e-9) << eta;
  }
}

TEST(EvolveUnitary, NonHermitianRejected) {
  const HilbertLayout L({up_s}, 3);
  EXPECT_THROW(evolve_unitary(vacuum(L), annihilation(L, up_s), 1e-9), NumericError);
}

TEST(EvolveUnitary, MixedStateMatchesPure) {
  const auto L = HilbertLayout::interferometer(4);
  auto h = build_hamiltonian(ComponentSpec::twpa(0.2, ArmScope::up, 5e-9), L) + build_hamiltonian(ComponentSpec::hybrid(5e-9), L);
  auto s = make_fock(L, {1, 0, 0, 0});
  auto p = evolve_unitary(s, h, 5e-9);
  auto m = evolve_unitary(s.to_mixed(), h, 5e-9);
  EXPECT_LT((m.matrix() - p.density()).norm(), 1e-12);
}

TEST(EvolveUnitary, GlobalPhaseDoesNotChangeObservables) {
  const auto L = HilbertLayout::single_arm(20);
  auto h = build_hamiltonian(ComponentSpec::twpa(0.5, ArmScope::up, 1e-9), L);
  auto shifted = h + ModeOperator::identity(L, 3.7e9);
  auto a = evolve_unitary(make_fock(L, {1, 0}), h, 1e-9);
  auto b = evolve_unitary(make_fock(L, {1, 0}), shifted, 1e-9);
  EXPECT_GT(std::abs(a.vector().dot(b.vector()) - cplx(1)), 1e-3);
  EXPECT_NEAR(mean_number(a, up_s), mean_number(b, up_s), 1e-12);
  EXPECT_NEAR(mean_number(a, up_i), mean_number(b, up_i), 1e-12);
  auto da = number_distribution(a), db = number_distribution(b);
  for (size_t i = 0; i < da.probabilities.size(); ++i) EXPECT_NEAR(da.probabilities[i], db.probabilities[i], 1e-12);
}

TEST(EvolveUnitary, InputOutputRelationForNumberStates) {
  const double k = 0.45;
  const auto L = HilbertLayout::single_arm(40);
  const double c2 = std::pow(std::cosh(k), 2), s2 = std::pow(std::sinh(k), 2);
  for (auto [ns, ni] : std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {2, 1}, {0, 3}}) {
    auto s = evolve_unitary(make_fock(L, {ns, ni}), build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, 1e-9), L), 1e-9);
    EXPECT_NEAR(mean_number(s, up_s), ns * c2 + (ni + 1) * s2, 1e-9);
    EXPECT_NEAR(mean_number(s, up_i), ni * c2 + (ns + 1) * s2, 1e-9);
  }
}

TEST(ThermalOccupation, FiveGigahertzFiftyMillikelvin) {
  EXPECT_NEAR(thermal_occupation(ghz5, 0.05) / 8.3e-3, 1.0, 0.02);
  EXPECT_EQ(thermal_occupation(ghz5, 0.0), 0.0);
  EXPECT_NEAR(thermal_occupation(ghz5, 0.2), bose(ghz5, 0.2), 1e-14);
  EXPECT_LT(thermal_occupation(ghz5, 0.05), thermal_occupation(ghz5, 0.1));
}

TEST(JumpOperators, ZeroTemperatureHasNoIncoherentPumping) {
  const HilbertLayout L({up_s}, 4);
  auto j = jump_operators(L, BathSpec(1e8, 0.0, ghz5));
  ASSERT_EQ(j.size(), 2u);
  EXPECT_GT(j[0].sparse().norm(), 0);
  EXPECT_EQ(j[1].sparse().norm(), 0);
}

TEST(JumpOperators, DetailedBalance) {
  const HilbertLayout L({up_s}, 30);
  const BathSpec bath(1e8, 0.3, ghz5);
  auto s = evolve_lindblad(make_fock(L, {1}), ModeOperator(L), jump_operators(L, bath), 40e-8, 1e-10);
  EXPECT_NEAR(mean_number(s, up_s), bose(ghz5, 0.3), 1e-6);
}

TEST(Lindblad, NoJumpsAgreesWithUnitary) {
  const auto L = HilbertLayout::single_arm(15);
  auto h = build_hamiltonian(ComponentSpec::twpa(0.5, ArmScope::up, 5e-9), L);
  auto u = evolve_unitary(make_fock(L, {1, 0}), h, 5e-9);
  auto r = evolve_lindblad(make_fock(L, {1, 0}), h, {}, 5e-9, 1e-10);
  EXPECT_LT((r.matrix() - u.density()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lindblad, ZeroTemperatureDecay) {
  const HilbertLayout L({up_s}, 3);
  auto s = evolve_lindblad(make_fock(L, {1}), ModeOperator(L), jump_operators(L, BathSpec(1e8, 0, ghz5)), 10e-9, 1e-10);
  EXPECT_NEAR(mean_number(s, up_s), std::exp(-1.0), 1e-6);
}

TEST(Lindblad, TraceAndPositivityConserved) {
  const auto L = HilbertLayout::single_arm(8);
  auto h = build_hamiltonian(ComponentSpec::twpa(0.4, ArmScope::up, 5e-9), L);
  IntegrationStats st;
  const double tol = 1e-9;
  auto s = evolve_lindblad(make_fock(L, {1, 0}), h, jump_operators(L, BathSpec(1e8, 0.05, ghz5)), 5e-9, tol, st);
  EXPECT_LT(std::abs(s.weight() - 1), 1e-8);
  EXPECT_LT(st.max_trace_drift, 1e-8);
  Eigen::SelfAdjointEigenSolver<Mat> es(s.matrix());
  EXPECT_GT(es.eigenvalues().minCoeff(), -10 * tol);
  EXPECT_GT(st.accepted, 0);
}

TEST(Lindblad, TimeRescalingInvariance) {
  const auto L = HilbertLayout::single_arm(8);
  auto run = [&](double c) {
    auto h = build_hamiltonian(ComponentSpec::twpa(0.4, ArmScope::up, 5e-9 * c), L);
    return evolve_lindblad(make_fock(L, {1, 0}), h, jump_operators(L, BathSpec(1e8 / c, 0.05, ghz5)), 5e-9 * c, 1e-11);
  };
  auto a = run(1), b = run(7.5);
  EXPECT_LT((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lindblad, LossyAmplifierMatchesMomentEquations) {
  const double k = 0.4, dt = 5e-9, g = 1e8;
  const auto L = HilbertLayout::single_arm(12);
  const BathSpec bath(g, 0.05, ghz5);
  auto s = evolve_lindblad(make_fock(L, {1, 0}), build_hamiltonian(ComponentSpec::twpa(k, ArmScope::up, dt), L),
                           jump_operators(L, bath), dt, 1e-11);
  auto m = oracle::evolve_moments({1, 0, 0}, k / dt, g, bath.n_th(), bath.n_th(), dt);
  EXPECT_NEAR(mean_number(s, up_s), m.n_s, 1e-6);
  EXPECT_NEAR(mean_number(s, up_i), m.n_i, 1e-6);
}

TEST(InsertionLoss, AmplifierAndComponentValues) {
  auto a = insertion_loss(1e8, 5e-9, 0, 1);
  EXPECT_NEAR(a.exact_db, 2.17, 0.01);
  EXPECT_NEAR(a.approx_db, 2.0, 1e-12);
  EXPECT_EQ(insertion_loss(1e8, 0, 0, 1).exact_db, 0.0);
  EXPECT_NEAR(insertion_loss(1e8, 1e-9, 0, 1).exact_db, 0.4, 0.05);
  EXPECT_THROW(insertion_loss(1e8, 1e-9, 0, 0), ConfigError);
}
