#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "twpa/fock.hpp"

namespace twpa::detail {

class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), size_t{0}); }
  size_t find(size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(size_t a, size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<size_t> parent_;
};

// Groups the terms of an operator into sets acting on disjoint groups of modes.
struct TermGroup {
  std::vector<size_t> modes;  // sorted
  std::vector<const ModeOperator::Term*> terms;
};

inline std::vector<TermGroup> group_terms(const ModeOperator& op, cplx& scalar_part) {
  const size_t m = op.layout().num_modes();
  DisjointSets ds(m);
  std::vector<bool> used(m, false);
  scalar_part = 0;
  for (const auto& t : op.terms()) {
    for (size_t k = 1; k < t.factors.size(); ++k) ds.unite(t.factors[0].mode, t.factors[k].mode);
    for (const auto& f : t.factors) used[f.mode] = true;
  }
  std::vector<TermGroup> groups;
  std::vector<long> group_of_root(m, -1);
  for (size_t k = 0; k < m; ++k) {
    if (!used[k]) continue;
    size_t r = ds.find(k);
    if (group_of_root[r] < 0) {
      group_of_root[r] = static_cast<long>(groups.size());
      groups.push_back({});
    }
    groups[group_of_root[r]].modes.push_back(k);
  }
  for (const auto& t : op.terms()) {
    if (t.factors.empty()) {
      scalar_part += t.coeff;
      continue;
    }
    groups[group_of_root[ds.find(t.factors[0].mode)]].terms.push_back(&t);
  }
  return groups;
}

// Sparse matrix of a term group on the N^k space of its modes.
inline SpMat group_matrix(const TermGroup& g, int n) {
  const size_t k = g.modes.size();
  size_t dim = 1;
  for (size_t i = 0; i < k; ++i) dim *= n;
  if (dim > (size_t{1} << 24)) throw NumericError("generator couples too many modes for the local propagator");
  std::vector<size_t> stride(k, 1);
  for (size_t i = k - 1; i-- > 0;) stride[i] = stride[i + 1] * n;
  std::vector<Eigen::Triplet<cplx>> trip;
  for (const auto* t : g.terms) {
    std::vector<size_t> tpos, other;  // positions within the group
    for (const auto& f : t->factors)
      tpos.push_back(static_cast<size_t>(std::find(g.modes.begin(), g.modes.end(), f.mode) - g.modes.begin()));
    for (size_t i = 0; i < k; ++i)
      if (std::find(tpos.begin(), tpos.end(), i) == tpos.end()) other.push_back(i);
    SpMat loc = ModeOperator::local_matrix(*t, n);
    std::vector<size_t> toff{0}, ooff{0};
    for (auto p : tpos) {
      std::vector<size_t> nx;
      for (auto o : toff)
        for (int q = 0; q < n; ++q) nx.push_back(o + q * stride[p]);
      toff.swap(nx);
    }
    for (auto p : other) {
      std::vector<size_t> nx;
      for (auto o : ooff)
        for (int q = 0; q < n; ++q) nx.push_back(o + q * stride[p]);
      ooff.swap(nx);
    }
    for (Eigen::Index r = 0; r < loc.outerSize(); ++r)
      for (SpMat::InnerIterator it(loc, r); it; ++it)
        for (auto b : ooff)
          trip.emplace_back(static_cast<int>(b + toff[it.row()]), static_cast<int>(b + toff[it.col()]), it.value());
  }
  SpMat m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m.setFromTriplets(trip.begin(), trip.end());
  m.prune(0.0, 0.0);
  return m;
}

inline double relative_hermiticity_defect(const SpMat& m) {
  SpMat d = m - SpMat(m.adjoint());
  double mx = 0, scale = 0;
  for (Eigen::Index r = 0; r < d.outerSize(); ++r)
    for (SpMat::InnerIterator it(d, r); it; ++it) mx = std::max(mx, std::abs(it.value()));
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SpMat::InnerIterator it(m, r); it; ++it) scale = std::max(scale, std::abs(it.value()));
  return scale > 0 ? mx / scale : 0.0;
}

// exp(-i H dt) for one term group, split into the connected blocks of H. Block unitaries
// are built on first use, so only the sectors reached by the state cost anything.
class GroupPropagator {
 public:
  GroupPropagator(const HilbertLayout& layout, const TermGroup& g, double dt)
      : modes_(g.modes), dt_(dt), h_(group_matrix(g, layout.cutoff())) {
    if (relative_hermiticity_defect(h_) > 1e-12) throw NumericError("generator is not Hermitian");
    const auto dim = static_cast<size_t>(h_.rows());
    DisjointSets ds(dim);
    for (Eigen::Index r = 0; r < h_.outerSize(); ++r)
      for (SpMat::InnerIterator it(h_, r); it; ++it) ds.unite(static_cast<size_t>(it.row()), static_cast<size_t>(it.col()));
    block_of_.assign(dim, 0);
    std::vector<long> id(dim, -1);
    for (size_t i = 0; i < dim; ++i) {
      size_t r = ds.find(i);
      if (id[r] < 0) {
        id[r] = static_cast<long>(members_.size());
        members_.push_back({});
      }
      block_of_[i] = static_cast<size_t>(id[r]);
      members_[id[r]].push_back(i);
    }
    unitary_.resize(members_.size());
    ready_.assign(members_.size(), false);
    offsets_ = layout.local_offsets(modes_);
    rest_ = layout.rest_bases(modes_);
  }

  // Applies the propagator in place to a vector over the full layout.
  void apply(cplx* psi, bool all_blocks = false) {
    std::vector<bool> touched(members_.size(), all_blocks);
    if (!all_blocks)
      for (auto b : rest_)
        for (size_t l = 0; l < offsets_.size(); ++l)
          if (psi[b + offsets_[l]] != cplx(0)) touched[block_of_[l]] = true;
    Vec x, y;
    for (size_t blk = 0; blk < members_.size(); ++blk) {
      if (!touched[blk]) continue;
      const Mat& u = block_unitary(blk);
      const auto& mem = members_[blk];
      const auto s = static_cast<Eigen::Index>(mem.size());
      x.resize(s);
      for (auto b : rest_) {
        bool nz = false;
        for (Eigen::Index i = 0; i < s; ++i) {
          x[i] = psi[b + offsets_[mem[i]]];
          nz = nz || x[i] != cplx(0);
        }
        if (!nz) continue;
        y.noalias() = u * x;
        for (Eigen::Index i = 0; i < s; ++i) psi[b + offsets_[mem[i]]] = y[i];
      }
    }
  }

 private:
  const Mat& block_unitary(size_t blk) {
    if (ready_[blk]) return unitary_[blk];
    const auto& mem = members_[blk];
    const auto s = static_cast<Eigen::Index>(mem.size());
    Mat hb = Mat::Zero(s, s);
    for (Eigen::Index i = 0; i < s; ++i)
      for (Eigen::Index j = 0; j < s; ++j) hb(i, j) = h_.coeff(static_cast<Eigen::Index>(mem[i]), static_cast<Eigen::Index>(mem[j]));
    hb = (0.5 * (hb + hb.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(hb);
    Eigen::VectorXcd ph(s);
    for (Eigen::Index i = 0; i < s; ++i) ph[i] = std::exp(cplx(0, -es.eigenvalues()[i] * dt_));
    unitary_[blk] = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    ready_[blk] = true;
    return unitary_[blk];
  }

  std::vector<size_t> modes_;
  double dt_;
  SpMat h_;
  std::vector<size_t> block_of_;
  std::vector<std::vector<size_t>> members_;
  std::vector<Mat> unitary_;
  std::vector<bool> ready_;
  std::vector<size_t> offsets_, rest_;
};

}  // namespace twpa::detail
