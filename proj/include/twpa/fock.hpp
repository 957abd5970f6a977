#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "twpa/errors.hpp"

namespace twpa {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

enum class Arm { up, low };
enum class Species { signal, idler };

struct Mode {
  Arm arm;
  Species species;
  friend bool operator==(const Mode&, const Mode&) = default;
};

inline std::string to_string(Mode m) {
  return std::string(m.arm == Arm::up ? "up" : "low") + "," + (m.species == Species::signal ? "s" : "i");
}

inline constexpr Mode up_s{Arm::up, Species::signal};
inline constexpr Mode up_i{Arm::up, Species::idler};
inline constexpr Mode low_s{Arm::low, Species::signal};
inline constexpr Mode low_i{Arm::low, Species::idler};

class TruncationError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Ordered modes, each truncated to occupations 0..N-1. The first mode is the most
// significant digit of the flat index (kron ordering).
class HilbertLayout {
 public:
  HilbertLayout() = default;
  HilbertLayout(std::vector<Mode> modes, int cutoff) : modes_(std::move(modes)), cutoff_(cutoff) {
    require(!modes_.empty(), "layout needs at least one mode");
    require(cutoff_ >= 2, "cutoff N must be >= 2, got " + std::to_string(cutoff_));
    for (size_t i = 0; i < modes_.size(); ++i)
      for (size_t j = i + 1; j < modes_.size(); ++j)
        require(!(modes_[i] == modes_[j]), "duplicate mode label (" + to_string(modes_[i]) + ")");
    strides_.assign(modes_.size(), 1);
    double dim = 1;
    for (size_t k = modes_.size(); k-- > 0;) {
      strides_[k] = dim_;
      dim *= cutoff_;
      dim_ *= static_cast<size_t>(cutoff_);
    }
    require(dim < 4e9, "Hilbert space dimension too large");
  }

  // (up,s), (up,i), (low,s), (low,i)
  static HilbertLayout interferometer(int cutoff) { return HilbertLayout({up_s, up_i, low_s, low_i}, cutoff); }
  // Signal and idler of one arm.
  static HilbertLayout single_arm(int cutoff, Arm arm = Arm::up) {
    return HilbertLayout({{arm, Species::signal}, {arm, Species::idler}}, cutoff);
  }

  const std::vector<Mode>& modes() const { return modes_; }
  size_t num_modes() const { return modes_.size(); }
  int cutoff() const { return cutoff_; }
  size_t dimension() const { return dim_; }
  size_t stride(size_t pos) const { return strides_[pos]; }

  bool contains(Mode m) const { return std::find(modes_.begin(), modes_.end(), m) != modes_.end(); }
  size_t position(Mode m) const {
    auto it = std::find(modes_.begin(), modes_.end(), m);
    if (it == modes_.end()) throw ConfigError("mode (" + to_string(m) + ") not in layout");
    return static_cast<size_t>(it - modes_.begin());
  }

  int occupation(size_t index, size_t pos) const { return static_cast<int>((index / strides_[pos]) % cutoff_); }
  std::vector<int> occupations(size_t index) const {
    std::vector<int> occ(modes_.size());
    for (size_t k = 0; k < modes_.size(); ++k) occ[k] = occupation(index, k);
    return occ;
  }
  size_t index(const std::vector<int>& occ) const {
    require(occ.size() == modes_.size(), "occupation list length does not match layout");
    size_t idx = 0;
    for (size_t k = 0; k < occ.size(); ++k) {
      if (occ[k] < 0) throw ConfigError("negative occupation");
      if (occ[k] >= cutoff_)
        throw TruncationError("occupation " + std::to_string(occ[k]) + " on mode (" + to_string(modes_[k]) +
                              ") exceeds cutoff N=" + std::to_string(cutoff_));
      idx += static_cast<size_t>(occ[k]) * strides_[k];
    }
    return idx;
  }

  HilbertLayout subset(const std::vector<size_t>& positions) const {
    std::vector<Mode> m;
    for (auto p : positions) {
      require(p < modes_.size(), "mode position out of range");
      m.push_back(modes_[p]);
    }
    return HilbertLayout(m, cutoff_);
  }

  // Flat offsets of every local configuration of the given modes (row-major over positions).
  std::vector<size_t> local_offsets(const std::vector<size_t>& positions) const {
    std::vector<size_t> off{0};
    for (auto p : positions) {
      std::vector<size_t> next;
      next.reserve(off.size() * cutoff_);
      for (auto o : off)
        for (int n = 0; n < cutoff_; ++n) next.push_back(o + n * strides_[p]);
      off.swap(next);
    }
    return off;
  }

  // Flat indices with zero occupation on the given modes.
  std::vector<size_t> rest_bases(const std::vector<size_t>& positions) const {
    std::vector<size_t> others;
    for (size_t k = 0; k < modes_.size(); ++k)
      if (std::find(positions.begin(), positions.end(), k) == positions.end()) others.push_back(k);
    return local_offsets(others);
  }

  friend bool operator==(const HilbertLayout& a, const HilbertLayout& b) {
    return a.cutoff_ == b.cutoff_ && a.modes_ == b.modes_;
  }

 private:
  std::vector<Mode> modes_;
  int cutoff_ = 0;
  size_t dim_ = 1;
  std::vector<size_t> strides_;
};

class QuantumState {
 public:
  QuantumState() = default;
  QuantumState(HilbertLayout layout, Vec psi) : layout_(std::move(layout)), data_(std::move(psi)) {
    require(static_cast<size_t>(vector().size()) == layout_.dimension(), "state vector has wrong dimension");
  }
  QuantumState(HilbertLayout layout, Mat rho) : layout_(std::move(layout)), data_(std::move(rho)) {
    require(static_cast<size_t>(matrix().rows()) == layout_.dimension() && matrix().cols() == matrix().rows(),
            "density matrix has wrong dimension");
  }

  const HilbertLayout& layout() const { return layout_; }
  bool is_pure() const { return std::holds_alternative<Vec>(data_); }
  const Vec& vector() const { return std::get<Vec>(data_); }
  const Mat& matrix() const { return std::get<Mat>(data_); }
  Vec& vector() { return std::get<Vec>(data_); }
  Mat& matrix() { return std::get<Mat>(data_); }

  Mat density() const {
    if (!is_pure()) return matrix();
    return vector() * vector().adjoint();
  }
  QuantumState to_mixed() const { return is_pure() ? QuantumState(layout_, density()) : *this; }

  // Squared norm (pure) or trace (mixed).
  double weight() const { return is_pure() ? vector().squaredNorm() : matrix().trace().real(); }

  void validate(double tol = 1e-10) const {
    if (std::abs(1.0 - weight()) > tol)
      throw NumericError("state normalization off by " + std::to_string(std::abs(1.0 - weight())));
    if (is_pure()) return;
    const Mat& r = matrix();
    double herm = (r - r.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol) throw NumericError("density matrix not Hermitian: " + std::to_string(herm));
    Eigen::SelfAdjointEigenSolver<Mat> es(r, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9)
      throw NumericError("density matrix has negative eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  }

 private:
  HilbertLayout layout_;
  std::variant<Vec, Mat> data_;
};

inline QuantumState make_fock(const HilbertLayout& layout, const std::vector<int>& occupations) {
  Vec psi = Vec::Zero(static_cast<Eigen::Index>(layout.dimension()));
  psi(static_cast<Eigen::Index>(layout.index(occupations))) = 1.0;
  return QuantumState(layout, std::move(psi));
}

inline QuantumState vacuum(const HilbertLayout& layout) {
  return make_fock(layout, std::vector<int>(layout.num_modes(), 0));
}

namespace single_mode {

inline Mat annihilation(int n) {
  Mat a = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}
inline Mat creation(int n) { return annihilation(n).adjoint(); }
inline Mat number(int n) {
  Mat m = Mat::Zero(n, n);
  for (int k = 0; k < n; ++k) m(k, k) = k;
  return m;
}

}  // namespace single_mode

// Sum of products of single-mode factors; each term touches each mode at most once.
class ModeOperator {
 public:
  struct Factor {
    size_t mode;
    Mat op;
  };
  struct Term {
    cplx coeff;
    std::vector<Factor> factors;  // sorted by mode, no repeats
  };

  ModeOperator() = default;
  explicit ModeOperator(HilbertLayout layout) : layout_(std::move(layout)) {}

  static ModeOperator single(const HilbertLayout& layout, size_t mode, Mat op, cplx coeff = 1.0) {
    require(mode < layout.num_modes(), "mode position out of range");
    require(op.rows() == layout.cutoff() && op.cols() == layout.cutoff(), "single-mode factor has wrong size");
    ModeOperator m(layout);
    m.terms_.push_back({coeff, {{mode, std::move(op)}}});
    return m;
  }
  static ModeOperator identity(const HilbertLayout& layout, cplx coeff = 1.0) {
    ModeOperator m(layout);
    m.terms_.push_back({coeff, {}});
    return m;
  }

  const HilbertLayout& layout() const { return layout_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  ModeOperator& operator+=(const ModeOperator& o) {
    check_layout(o);
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }
  friend ModeOperator operator+(ModeOperator a, const ModeOperator& b) { return a += b; }
  friend ModeOperator operator-(ModeOperator a, const ModeOperator& b) { return a += cplx(-1) * b; }
  friend ModeOperator operator*(cplx s, ModeOperator a) {
    for (auto& t : a.terms_) t.coeff *= s;
    return a;
  }
  friend ModeOperator operator*(const ModeOperator& a, const ModeOperator& b) {
    a.check_layout(b);
    ModeOperator r(a.layout_);
    for (const auto& ta : a.terms_)
      for (const auto& tb : b.terms_) {
        Term t{ta.coeff * tb.coeff, {}};
        size_t i = 0, j = 0;
        while (i < ta.factors.size() || j < tb.factors.size()) {
          if (j == tb.factors.size() || (i < ta.factors.size() && ta.factors[i].mode < tb.factors[j].mode)) {
            t.factors.push_back(ta.factors[i++]);
          } else if (i == ta.factors.size() || tb.factors[j].mode < ta.factors[i].mode) {
            t.factors.push_back(tb.factors[j++]);
          } else {
            t.factors.push_back({ta.factors[i].mode, ta.factors[i].op * tb.factors[j].op});
            ++i, ++j;
          }
        }
        r.terms_.push_back(std::move(t));
      }
    return r;
  }

  ModeOperator adjoint() const {
    ModeOperator r = *this;
    for (auto& t : r.terms_) {
      t.coeff = std::conj(t.coeff);
      for (auto& f : t.factors) f.op = f.op.adjoint().eval();
    }
    return r;
  }

  // Local matrix of one term on its own modes, kron-ordered by mode position.
  static SpMat local_matrix(const Term& t, int n) {
    std::vector<Eigen::Triplet<cplx>> cur{{0, 0, t.coeff}};
    Eigen::Index dim = 1;
    for (const auto& f : t.factors) {
      std::vector<Eigen::Triplet<cplx>> nx;
      for (const auto& e : cur)
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j)
            if (f.op(i, j) != cplx(0)) nx.emplace_back(e.row() * n + i, e.col() * n + j, e.value() * f.op(i, j));
      cur.swap(nx);
      dim *= n;
    }
    SpMat m(dim, dim);
    m.setFromTriplets(cur.begin(), cur.end());
    return m;
  }

  // Full sparse matrix over the layout.
  SpMat sparse() const {
    const size_t dim = layout_.dimension();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (const auto& t : terms_) {
      std::vector<size_t> pos;
      for (const auto& f : t.factors) pos.push_back(f.mode);
      SpMat loc = local_matrix(t, layout_.cutoff());
      auto off = layout_.local_offsets(pos);
      auto rest = layout_.rest_bases(pos);
      for (Eigen::Index r = 0; r < loc.outerSize(); ++r)
        for (SpMat::InnerIterator it(loc, r); it; ++it)
          for (auto b : rest)
            trip.emplace_back(static_cast<int>(b + off[it.row()]), static_cast<int>(b + off[it.col()]), it.value());
    }
    SpMat m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    m.setFromTriplets(trip.begin(), trip.end());
    m.prune(0.0, 0.0);
    return m;
  }

  // O|psi> without materializing the full matrix.
  Vec apply(const Vec& psi) const {
    require(static_cast<size_t>(psi.size()) == layout_.dimension(), "vector dimension does not match operator");
    Vec out = Vec::Zero(psi.size());
    for (const auto& t : terms_) {
      std::vector<size_t> pos;
      for (const auto& f : t.factors) pos.push_back(f.mode);
      SpMat loc = local_matrix(t, layout_.cutoff());
      auto off = layout_.local_offsets(pos);
      auto rest = layout_.rest_bases(pos);
      for (Eigen::Index r = 0; r < loc.outerSize(); ++r)
        for (SpMat::InnerIterator it(loc, r); it; ++it) {
          const size_t o_out = off[it.row()], o_in = off[it.col()];
          const cplx v = it.value();
          for (auto b : rest) out[b + o_out] += v * psi[b + o_in];
        }
    }
    return out;
  }

  // max |H - H^dagger| over matrix entries, checked on the full sparse form.
  double hermiticity_defect() const {
    SpMat m = sparse();
    SpMat d = m - SpMat(m.adjoint());
    double mx = 0;
    for (Eigen::Index r = 0; r < d.outerSize(); ++r)
      for (SpMat::InnerIterator it(d, r); it; ++it) mx = std::max(mx, std::abs(it.value()));
    return mx;
  }

 private:
  void check_layout(const ModeOperator& o) const {
    if (!(layout_ == o.layout_)) throw ConfigError("operator layouts differ");
  }

  HilbertLayout layout_;
  std::vector<Term> terms_;
};

inline ModeOperator annihilation(const HilbertLayout& layout, Mode m) {
  return ModeOperator::single(layout, layout.position(m), single_mode::annihilation(layout.cutoff()));
}
inline ModeOperator creation(const HilbertLayout& layout, Mode m) {
  return ModeOperator::single(layout, layout.position(m), single_mode::creation(layout.cutoff()));
}
inline ModeOperator number(const HilbertLayout& layout, Mode m) {
  return ModeOperator::single(layout, layout.position(m), single_mode::number(layout.cutoff()));
}

inline cplx expectation(const QuantumState& state, const ModeOperator& op) {
  if (!(state.layout() == op.layout())) throw ConfigError("state and operator layouts differ");
  if (state.is_pure()) return state.vector().dot(op.apply(state.vector()));
  SpMat m = op.sparse();
  const Mat& rho = state.matrix();
  cplx tr = 0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SpMat::InnerIterator it(m, r); it; ++it) tr += it.value() * rho(it.col(), it.row());
  return tr;
}

// Diagonal of the state in the Fock basis.
inline Eigen::VectorXd fock_probabilities(const QuantumState& state) {
  if (state.is_pure()) return state.vector().cwiseAbs2();
  return state.matrix().diagonal().real();
}

// Mean occupation of one mode, computed from the Fock diagonal.
inline double mean_number(const QuantumState& state, Mode m) {
  const auto& L = state.layout();
  const size_t pos = L.position(m);
  Eigen::VectorXd p = fock_probabilities(state);
  double s = 0;
  for (size_t i = 0; i < L.dimension(); ++i) s += L.occupation(i, pos) * p[static_cast<Eigen::Index>(i)];
  return s;
}

inline QuantumState partial_trace(const QuantumState& state, const std::vector<size_t>& keep) {
  require(!keep.empty(), "partial trace needs a non-empty set of kept modes");
  const auto& L = state.layout();
  for (size_t i = 0; i < keep.size(); ++i) {
    require(keep[i] < L.num_modes(), "kept mode out of range");
    for (size_t j = i + 1; j < keep.size(); ++j) require(keep[i] != keep[j], "kept modes repeat");
  }
  HilbertLayout sub = L.subset(keep);
  auto koff = L.local_offsets(keep);
  auto rest = L.rest_bases(keep);
  const auto dk = static_cast<Eigen::Index>(koff.size());
  const auto dt = static_cast<Eigen::Index>(rest.size());
  Mat red = Mat::Zero(dk, dk);
  if (state.is_pure()) {
    Mat m(dk, dt);
    for (Eigen::Index t = 0; t < dt; ++t)
      for (Eigen::Index k = 0; k < dk; ++k) m(k, t) = state.vector()[rest[t] + koff[k]];
    red.noalias() = m * m.adjoint();
  } else {
    const Mat& rho = state.matrix();
    for (Eigen::Index t = 0; t < dt; ++t)
      for (Eigen::Index k = 0; k < dk; ++k)
        for (Eigen::Index k2 = 0; k2 < dk; ++k2) red(k, k2) += rho(rest[t] + koff[k], rest[t] + koff[k2]);
  }
  return QuantumState(sub, std::move(red));
}

inline QuantumState partial_trace(const QuantumState& state, const std::vector<Mode>& keep) {
  std::vector<size_t> pos;
  for (auto m : keep) pos.push_back(state.layout().position(m));
  return partial_trace(state, pos);
}

// Joint Fock-basis probability table. Entries below 1e-12 are reported as 0.
struct NumberDistribution {
  HilbertLayout layout;
  std::vector<double> probabilities;
  double tail = 0;  // 1 - sum of unclamped probabilities

  double at(const std::vector<int>& occ) const { return probabilities[layout.index(occ)]; }

  NumberDistribution marginal(const std::vector<size_t>& keep) const {
    HilbertLayout sub = layout.subset(keep);
    NumberDistribution d{sub, std::vector<double>(sub.dimension(), 0.0), tail};
    std::vector<int> occ(keep.size());
    for (size_t i = 0; i < layout.dimension(); ++i) {
      if (probabilities[i] == 0) continue;
      for (size_t k = 0; k < keep.size(); ++k) occ[k] = layout.occupation(i, keep[k]);
      d.probabilities[sub.index(occ)] += probabilities[i];
    }
    return d;
  }
};

inline constexpr double probability_floor = 1e-12;

inline NumberDistribution number_distribution(const QuantumState& state) {
  Eigen::VectorXd p = fock_probabilities(state);
  NumberDistribution d{state.layout(), std::vector<double>(static_cast<size_t>(p.size())), 0.0};
  double total = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    total += p[i];
    d.probabilities[static_cast<size_t>(i)] = p[i] < probability_floor ? 0.0 : p[i];
  }
  d.tail = std::max(0.0, 1.0 - total);
  return d;
}

// Population in the top two Fock levels of each mode.
struct TruncationReport {
  std::vector<double> edge_population;
  double max() const { return edge_population.empty() ? 0.0 : *std::max_element(edge_population.begin(), edge_population.end()); }
};

inline TruncationReport truncation_report(const QuantumState& state) {
  const auto& L = state.layout();
  Eigen::VectorXd p = fock_probabilities(state);
  TruncationReport r{std::vector<double>(L.num_modes(), 0.0)};
  const int top = L.cutoff() - 2;
  for (size_t i = 0; i < L.dimension(); ++i) {
    const double pi = p[static_cast<Eigen::Index>(i)];
    if (pi == 0) continue;
    for (size_t k = 0; k < L.num_modes(); ++k)
      if (L.occupation(i, k) >= top) r.edge_population[k] += std::abs(pi);
  }
  return r;
}

}  // namespace twpa
