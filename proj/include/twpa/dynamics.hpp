#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "twpa/detail/dormand_prince.hpp"
#include "twpa/detail/local_propagator.hpp"
#include "twpa/fock.hpp"

namespace twpa {

namespace constants {
inline constexpr double hbar = 1.054571817e-34;  // J s
inline constexpr double k_B = 1.380649e-23;      // J/K
}  // namespace constants

enum class ComponentKind { hybrid, phase_shifter, twpa, twpa_degenerate, idle };
enum class ArmScope { up, low, both };

inline std::string to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::hybrid: return "hybrid";
    case ComponentKind::phase_shifter: return "phase_shifter";
    case ComponentKind::twpa: return "twpa";
    case ComponentKind::twpa_degenerate: return "twpa_degenerate";
    case ComponentKind::idle: return "idle";
  }
  return "?";
}

// One interferometer element. kappa is chi*dt for the amplifiers; phase is the applied
// shift for the phase shifter and the pump phase for the degenerate amplifier.
struct ComponentSpec {
  ComponentKind kind = ComponentKind::idle;
  double duration = 1e-9;  // s
  double kappa = 0;
  double phase = 0;  // rad
  ArmScope scope = ArmScope::both;

  static ComponentSpec hybrid(double dt) { return {ComponentKind::hybrid, dt, 0, 0, ArmScope::both}; }
  static ComponentSpec phase_shifter(double dtheta, double dt, ArmScope arm = ArmScope::up) {
    return {ComponentKind::phase_shifter, dt, 0, dtheta, arm};
  }
  static ComponentSpec twpa(double kappa, ArmScope arm, double dt) { return {ComponentKind::twpa, dt, kappa, 0, arm}; }
  static ComponentSpec degenerate(double kappa, double dphi, ArmScope arm, double dt) {
    return {ComponentKind::twpa_degenerate, dt, kappa, dphi, arm};
  }
  static ComponentSpec idle(double dt) { return {ComponentKind::idle, dt, 0, 0, ArmScope::both}; }

  void validate() const {
    require(duration > 0 && std::isfinite(duration), "component duration must be > 0");
    require(kappa >= 0 && std::isfinite(kappa), "amplification kappa must be >= 0");
    require(std::isfinite(phase), "phase must be finite");
    if (kind == ComponentKind::phase_shifter || kind == ComponentKind::twpa || kind == ComponentKind::twpa_degenerate)
      require(scope != ArmScope::both, to_string(kind) + " acts on a single arm");
  }
};

inline double thermal_occupation(double omega, double temperature) {
  require(omega > 0, "mode frequency must be > 0");
  require(temperature >= 0, "temperature must be >= 0");
  if (temperature == 0) return 0.0;
  const double x = constants::hbar * omega / (constants::k_B * temperature);
  return 1.0 / std::expm1(x);
}

struct BathSpec {
  double gamma = 0;        // s^-1
  double temperature = 0;  // K
  double omega = 2 * std::numbers::pi * 5e9;

  BathSpec() = default;
  BathSpec(double g, double t, double w) : gamma(g), temperature(t), omega(w) {
    require(gamma >= 0 && std::isfinite(gamma), "loss rate must be >= 0");
    require(temperature >= 0 && std::isfinite(temperature), "temperature must be >= 0");
    n_th_ = thermal_occupation(omega, temperature);
  }
  double n_th() const { return n_th_; }

 private:
  double n_th_ = 0;
};

namespace detail {

inline std::vector<Arm> arms_of(ArmScope s) {
  if (s == ArmScope::up) return {Arm::up};
  if (s == ArmScope::low) return {Arm::low};
  return {Arm::up, Arm::low};
}

inline void need_mode(const HilbertLayout& L, Mode m, const ComponentSpec& spec) {
  if (!L.contains(m))
    throw ConfigError(to_string(spec.kind) + " needs mode (" + to_string(m) + ") which is not in the layout");
}

}  // namespace detail

// Generator in angular-frequency units (hbar = 1), so U = exp(-i H dt).
inline ModeOperator build_hamiltonian(const ComponentSpec& spec, const HilbertLayout& L) {
  spec.validate();
  const int n = L.cutoff();
  const Mat a = single_mode::annihilation(n), ad = single_mode::creation(n), num = single_mode::number(n);
  const double dt = spec.duration;
  ModeOperator h(L);
  switch (spec.kind) {
    case ComponentKind::idle:
      break;
    case ComponentKind::hybrid: {
      // U = exp(i pi/4 (a+_up a_low + h.c.)) per species
      const double g = -std::numbers::pi / 4 / dt;
      bool any = false;
      for (Species sp : {Species::signal, Species::idler}) {
        Mode u{Arm::up, sp}, l{Arm::low, sp};
        if (!L.contains(u) || !L.contains(l)) continue;
        any = true;
        const size_t pu = L.position(u), pl = L.position(l);
        h += g * (ModeOperator::single(L, pu, ad) * ModeOperator::single(L, pl, a));
        h += g * (ModeOperator::single(L, pu, a) * ModeOperator::single(L, pl, ad));
      }
      if (!any) throw ConfigError("hybrid needs the same species on both arms in the layout");
      break;
    }
    case ComponentKind::phase_shifter: {
      const Arm arm = detail::arms_of(spec.scope).front();
      bool any = false;
      for (Species sp : {Species::signal, Species::idler}) {
        Mode m{arm, sp};
        if (!L.contains(m)) continue;
        any = true;
        h += ModeOperator::single(L, L.position(m), num, -spec.phase / dt);
      }
      if (!any) throw ConfigError("phase shifter arm has no modes in the layout");
      break;
    }
    case ComponentKind::twpa: {
      const Arm arm = detail::arms_of(spec.scope).front();
      Mode s{arm, Species::signal}, i{arm, Species::idler};
      detail::need_mode(L, s, spec);
      detail::need_mode(L, i, spec);
      const double g = -spec.kappa / dt;
      const size_t ps = L.position(s), pi = L.position(i);
      h += g * (ModeOperator::single(L, ps, ad) * ModeOperator::single(L, pi, ad));
      h += g * (ModeOperator::single(L, ps, a) * ModeOperator::single(L, pi, a));
      break;
    }
    case ComponentKind::twpa_degenerate: {
      const Arm arm = detail::arms_of(spec.scope).front();
      Mode s{arm, Species::signal};
      detail::need_mode(L, s, spec);
      const double g = -spec.kappa / dt;
      const cplx e = std::polar(1.0, spec.phase);
      const size_t ps = L.position(s);
      h += ModeOperator::single(L, ps, ad * ad, g * e);
      h += ModeOperator::single(L, ps, a * a, g * std::conj(e));
      break;
    }
  }
  return h;
}

inline QuantumState evolve_unitary(const QuantumState& state, const ModeOperator& h, double dt) {
  if (!(state.layout() == h.layout())) throw ConfigError("state and generator layouts differ");
  cplx scalar;
  auto groups = detail::group_terms(h, scalar);
  if (std::abs(scalar.imag()) > 1e-12 * std::max(1.0, std::abs(scalar))) throw NumericError("generator is not Hermitian");
  const cplx global = std::exp(cplx(0, -scalar.real() * dt));
  QuantumState out = state;
  std::vector<detail::GroupPropagator> props;
  props.reserve(groups.size());
  for (const auto& g : groups) props.emplace_back(state.layout(), g, dt);
  if (out.is_pure()) {
    Vec& v = out.vector();
    for (auto& p : props) p.apply(v.data());
    if (global != cplx(1)) v *= global;
  } else {
    Mat& r = out.matrix();
    for (auto& p : props)
      for (Eigen::Index j = 0; j < r.cols(); ++j) p.apply(r.col(j).data(), true);
    r.adjointInPlace();
    for (auto& p : props)
      for (Eigen::Index j = 0; j < r.cols(); ++j) p.apply(r.col(j).data(), true);
    r.adjointInPlace();
  }
  return out;
}

// Per mode: J_out = sqrt(G (1 + n_th)) a, J_in = sqrt(G n_th) a+. The idler bath may
// sit at a different frequency than the signal bath.
inline std::vector<ModeOperator> jump_operators(const HilbertLayout& L, const BathSpec& signal_bath,
                                                const BathSpec& idler_bath) {
  std::vector<ModeOperator> jumps;
  const int n = L.cutoff();
  for (size_t k = 0; k < L.num_modes(); ++k) {
    const BathSpec& b = L.modes()[k].species == Species::signal ? signal_bath : idler_bath;
    jumps.push_back(ModeOperator::single(L, k, single_mode::annihilation(n), std::sqrt(b.gamma * (1 + b.n_th()))));
    jumps.push_back(ModeOperator::single(L, k, single_mode::creation(n), std::sqrt(b.gamma * b.n_th())));
  }
  return jumps;
}

inline std::vector<ModeOperator> jump_operators(const HilbertLayout& L, const BathSpec& bath) {
  return jump_operators(L, bath, bath);
}

namespace detail {

// Conserved charge sum_k w_k n_k. Default: signal photons minus idler photons, which
// the amplifier, hybrid and phase generators all conserve.
inline std::vector<int> default_charge_weights(const HilbertLayout& L) {
  std::vector<int> w;
  for (const auto& m : L.modes()) w.push_back(m.species == Species::signal ? 1 : -1);
  return w;
}

// Density matrix stored as dense blocks, one per charge sector.
class SectorLindblad {
 public:
  SectorLindblad(const HilbertLayout& L, const SpMat& h, const std::vector<SpMat>& jumps, const Mat& rho0,
                 const std::vector<int>& weights)
      : dim_(static_cast<Eigen::Index>(L.dimension())) {
    std::vector<int> q(static_cast<size_t>(dim_), 0);
    for (size_t i = 0; i < L.dimension(); ++i)
      for (size_t k = 0; k < L.num_modes(); ++k) q[i] += weights[k] * L.occupation(i, k);
    if (!conserved(q, h, jumps, rho0)) std::fill(q.begin(), q.end(), 0);
    std::map<int, std::vector<Eigen::Index>> by_charge;
    for (Eigen::Index i = 0; i < dim_; ++i) by_charge[q[i]].push_back(i);
    std::map<int, size_t> block_of;
    for (auto& [c, idx] : by_charge) {
      block_of[c] = charges_.size();
      charges_.push_back(c);
      index_.push_back(idx);
    }
    local_.assign(static_cast<size_t>(dim_), 0);
    for (const auto& idx : index_)
      for (size_t j = 0; j < idx.size(); ++j) local_[idx[j]] = static_cast<Eigen::Index>(j);
    std::vector<size_t> bid(static_cast<size_t>(dim_));
    for (size_t b = 0; b < index_.size(); ++b)
      for (auto i : index_[b]) bid[i] = b;

    SpMat heff = h;
    for (const auto& j : jumps) heff -= cplx(0, 0.5) * SpMat(SpMat(j.adjoint()) * j);
    heff_ = sub_blocks_diag(heff, bid);

    for (const auto& j : jumps) {
      // source block -> (target block, matrix)
      std::map<std::pair<size_t, size_t>, std::vector<Eigen::Triplet<cplx>>> parts;
      for (Eigen::Index r = 0; r < j.outerSize(); ++r)
        for (SpMat::InnerIterator it(j, r); it; ++it)
          parts[{bid[it.col()], bid[it.row()]}].emplace_back(static_cast<int>(local_[it.row()]),
                                                             static_cast<int>(local_[it.col()]), it.value());
      for (auto& [st, trip] : parts) {
        SpMat m(static_cast<Eigen::Index>(index_[st.second].size()), static_cast<Eigen::Index>(index_[st.first].size()));
        m.setFromTriplets(trip.begin(), trip.end());
        transfers_.push_back({st.first, st.second, std::move(m)});
      }
    }

    offset_.push_back(0);
    for (const auto& idx : index_) offset_.push_back(offset_.back() + static_cast<Eigen::Index>(idx.size() * idx.size()));
  }

  Eigen::Index flat_size() const { return offset_.back(); }

  Vec pack(const Mat& rho) const {
    Vec y(flat_size());
    for (size_t b = 0; b < index_.size(); ++b) {
      const auto& idx = index_[b];
      const auto s = static_cast<Eigen::Index>(idx.size());
      for (Eigen::Index c = 0; c < s; ++c)
        for (Eigen::Index r = 0; r < s; ++r) y[offset_[b] + c * s + r] = rho(idx[r], idx[c]);
    }
    return y;
  }

  Mat unpack(const Vec& y) const {
    Mat rho = Mat::Zero(dim_, dim_);
    for (size_t b = 0; b < index_.size(); ++b) {
      const auto& idx = index_[b];
      const auto s = static_cast<Eigen::Index>(idx.size());
      for (Eigen::Index c = 0; c < s; ++c)
        for (Eigen::Index r = 0; r < s; ++r) rho(idx[r], idx[c]) = y[offset_[b] + c * s + r];
    }
    return rho;
  }

  double trace(const Vec& y) const {
    double t = 0;
    for (size_t b = 0; b < index_.size(); ++b) {
      const auto s = static_cast<Eigen::Index>(index_[b].size());
      for (Eigen::Index i = 0; i < s; ++i) t += y[offset_[b] + i * s + i].real();
    }
    return t;
  }

  void rhs(const Vec& y, Vec& dy) const {
    dy.setZero(y.size());
    for (size_t b = 0; b < index_.size(); ++b) {
      const auto s = static_cast<Eigen::Index>(index_[b].size());
      Eigen::Map<const Mat> r(y.data() + offset_[b], s, s);
      Eigen::Map<Mat> d(dy.data() + offset_[b], s, s);
      Mat x = heff_[b] * r;
      d.noalias() += cplx(0, -1) * x;
      d.noalias() += cplx(0, 1) * x.adjoint();
    }
    for (const auto& t : transfers_) {
      const auto ss = static_cast<Eigen::Index>(index_[t.source].size());
      const auto st = static_cast<Eigen::Index>(index_[t.target].size());
      Eigen::Map<const Mat> r(y.data() + offset_[t.source], ss, ss);
      Eigen::Map<Mat> d(dy.data() + offset_[t.target], st, st);
      Mat jr = t.j * r;
      Mat jrj = t.j * jr.adjoint();  // J (J rho)^+ = (J rho J^+)^+
      d += jrj.adjoint();
    }
  }

 private:
  struct Transfer {
    size_t source, target;
    SpMat j;
  };

  bool conserved(const std::vector<int>& q, const SpMat& h, const std::vector<SpMat>& jumps, const Mat& rho) const {
    for (Eigen::Index r = 0; r < h.outerSize(); ++r)
      for (SpMat::InnerIterator it(h, r); it; ++it)
        if (q[it.row()] != q[it.col()]) return false;
    for (const auto& j : jumps) {
      std::optional<int> shift;
      for (Eigen::Index r = 0; r < j.outerSize(); ++r)
        for (SpMat::InnerIterator it(j, r); it; ++it) {
          const int s = q[it.row()] - q[it.col()];
          if (!shift) shift = s;
          if (*shift != s) return false;
        }
    }
    for (Eigen::Index c = 0; c < rho.cols(); ++c)
      for (Eigen::Index r = 0; r < rho.rows(); ++r)
        if (rho(r, c) != cplx(0) && q[r] != q[c]) return false;
    return true;
  }

  std::vector<SpMat> sub_blocks_diag(const SpMat& m, const std::vector<size_t>& bid) const {
    std::vector<std::vector<Eigen::Triplet<cplx>>> trip(index_.size());
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
      for (SpMat::InnerIterator it(m, r); it; ++it)
        if (bid[it.row()] == bid[it.col()])
          trip[bid[it.row()]].emplace_back(static_cast<int>(local_[it.row()]), static_cast<int>(local_[it.col()]),
                                           it.value());
    std::vector<SpMat> out;
    for (size_t b = 0; b < index_.size(); ++b) {
      const auto s = static_cast<Eigen::Index>(index_[b].size());
      SpMat sm(s, s);
      sm.setFromTriplets(trip[b].begin(), trip[b].end());
      out.push_back(std::move(sm));
    }
    return out;
  }

  Eigen::Index dim_;
  std::vector<int> charges_;
  std::vector<std::vector<Eigen::Index>> index_;
  std::vector<Eigen::Index> local_;
  std::vector<Eigen::Index> offset_;
  std::vector<SpMat> heff_;
  std::vector<Transfer> transfers_;
};

}  // namespace detail

// Integrates d rho/dt = -i[H, rho] + sum_J (J rho J+ - {J+J, rho}/2) over dt.
inline QuantumState evolve_lindblad(const QuantumState& state, const ModeOperator& h,
                                    const std::vector<ModeOperator>& jumps, double dt, double tol,
                                    IntegrationStats& stats) {
  require(tol > 0, "integration tolerance must be > 0");
  require(dt >= 0, "duration must be >= 0");
  const auto& L = state.layout();
  if (!(L == h.layout())) throw ConfigError("state and generator layouts differ");
  SpMat hs = h.sparse();
  if (detail::relative_hermiticity_defect(hs) > 1e-12) throw NumericError("generator is not Hermitian");
  std::vector<SpMat> js;
  for (const auto& j : jumps) {
    if (!(L == j.layout())) throw ConfigError("jump operator layout differs from state");
    SpMat m = j.sparse();
    if (m.nonZeros() > 0) js.push_back(std::move(m));
  }
  Mat rho0 = state.density();
  detail::SectorLindblad sys(L, hs, js, rho0, detail::default_charge_weights(L));
  Vec y = sys.pack(rho0);
  const double tr0 = sys.trace(y);
  auto rhs = [&](double, const Vec& x, Vec& dx) { sys.rhs(x, dx); };
  auto monitor = [&](const Vec& x) {
    stats.max_trace_drift = std::max(stats.max_trace_drift, std::abs(sys.trace(x) - tr0));
  };
  detail::dormand_prince(rhs, y, 0.0, dt, tol, tol, stats, monitor);
  Mat rho = sys.unpack(y);
  rho = (0.5 * (rho + rho.adjoint())).eval();
  return QuantumState(L, std::move(rho));
}

inline QuantumState evolve_lindblad(const QuantumState& state, const ModeOperator& h,
                                    const std::vector<ModeOperator>& jumps, double dt, double tol = 1e-9) {
  IntegrationStats stats;
  return evolve_lindblad(state, h, jumps, dt, tol, stats);
}

struct InsertionLoss {
  double exact_db;
  double approx_db;  // 4 * gamma * dt
};

inline InsertionLoss insertion_loss(double gamma, double dt, double n_th, double n_in) {
  require(n_in > 0, "insertion loss needs a nonzero input photon number");
  require(gamma >= 0 && dt >= 0 && n_th >= 0, "insertion loss inputs must be >= 0");
  const double r = n_th / n_in;
  return {-10 * std::log10((1 - r) * std::exp(-gamma * dt) + r), 4 * gamma * dt};
}

}  // namespace twpa
