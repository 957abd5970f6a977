#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "twpa/detail/parallel.hpp"
#include "twpa/interferometer.hpp"

namespace twpa {

// Mean photon number after pure loss towards a bath at occupation n_th.
inline double n_out_kappa0(double n_in, double n_th, double gamma, double dt_total) {
  require(n_in >= 0 && n_th >= 0 && gamma >= 0 && dt_total >= 0, "n_out_kappa0 inputs must be >= 0");
  return (n_in - n_th) * std::exp(-gamma * dt_total) + n_th;
}

enum class Channel { As, Ai, Bs, Bi };
inline constexpr std::array<Channel, 4> all_channels{Channel::As, Channel::Ai, Channel::Bs, Channel::Bi};

inline std::string to_string(Channel c) {
  switch (c) {
    case Channel::As: return "A,s";
    case Channel::Ai: return "A,i";
    case Channel::Bs: return "B,s";
    case Channel::Bi: return "B,i";
  }
  return "?";
}

inline double get(const DetectorMeans& m, Channel c) {
  switch (c) {
    case Channel::As: return m.As;
    case Channel::Ai: return m.Ai;
    case Channel::Bs: return m.Bs;
    case Channel::Bi: return m.Bi;
  }
  return 0;
}

// The amplifier pairs the signal reaching one detector with the idler reaching the other.
inline Channel partner(Channel c) {
  switch (c) {
    case Channel::As: return Channel::Bi;
    case Channel::Ai: return Channel::Bs;
    case Channel::Bs: return Channel::Ai;
    case Channel::Bi: return Channel::As;
  }
  return c;
}

struct KappaRow {
  double kappa;
  DetectorMeans means;
};

struct ChannelFit {
  double f = 0;
  double n0 = 0;          // channel mean at kappa = 0
  double n0_partner = 0;  // partner channel mean at kappa = 0
  double residual = 0;    // 2-norm of data - model
  double data_norm = 0;
  double residual_ratio() const { return data_norm > 0 ? residual / data_norm : 0.0; }

  double model(double kappa) const {
    const double c = std::cosh(kappa), s = std::sinh(kappa);
    return n0 * c * c + (n0_partner + 1) * std::exp(-f) * s * s;
  }
};

struct LossFit {
  std::array<ChannelFit, 4> channels;  // indexed by Channel
  std::vector<double> kappas;
  double f_shared = 0;  // joint fit over (A,s), (B,s), (B,i)
  double f_idler_a = 0;  // (A,i)

  const ChannelFit& operator[](Channel c) const { return channels[static_cast<size_t>(c)]; }
  ChannelFit& operator[](Channel c) { return channels[static_cast<size_t>(c)]; }

  double max_residual_ratio() const {
    double m = 0;
    for (const auto& c : channels) m = std::max(m, c.residual_ratio());
    return m;
  }
  // Acceptance: f >= 0 on every channel and residual below `threshold` of the data norm.
  bool accepted(double threshold = 1e-2) const {
    for (const auto& c : channels)
      if (c.f < -1e-9) return false;
    return max_residual_ratio() < threshold;
  }
};

namespace detail {

// Least squares for g = e^{-f} in y = n0 c^2 + (np + 1) g s^2 over several channels at once.
inline double fit_decay_factor(const std::vector<KappaRow>& data, const std::vector<Channel>& chans,
                               const DetectorMeans& k0) {
  double num = 0, den = 0;
  for (auto ch : chans) {
    const double n0 = get(k0, ch), np = get(k0, partner(ch));
    for (const auto& r : data) {
      const double c = std::cosh(r.kappa), s = std::sinh(r.kappa);
      const double x = (np + 1) * s * s;
      num += (get(r.means, ch) - n0 * c * c) * x;
      den += x * x;
    }
  }
  if (!(den > 0)) throw ConvergenceError("loss fit has no amplification in its kappa grid", 0.0);
  const double g = num / den;
  if (!(g > 0) || !std::isfinite(g))
    throw ConvergenceError("loss fit gave a non-positive decay factor e^-f = " + std::to_string(g), std::abs(g));
  return -std::log(g);
}

}  // namespace detail

inline LossFit fit_f(const std::vector<KappaRow>& data, const DetectorMeans& kappa0) {
  require(data.size() >= 4, "loss fit needs at least 4 kappa points");
  LossFit fit;
  for (const auto& r : data) {
    require(r.kappa > 0 && r.kappa <= 1.0 + 1e-12, "loss fit uses kappa in (0, 1]");
    fit.kappas.push_back(r.kappa);
  }
  for (auto ch : all_channels) {
    ChannelFit& cf = fit[ch];
    cf.n0 = get(kappa0, ch);
    cf.n0_partner = get(kappa0, partner(ch));
    cf.f = detail::fit_decay_factor(data, {ch}, kappa0);
    double res = 0, norm = 0;
    for (const auto& r : data) {
      const double y = get(r.means, ch);
      res += std::pow(y - cf.model(r.kappa), 2);
      norm += y * y;
    }
    cf.residual = std::sqrt(res);
    cf.data_norm = std::sqrt(norm);
  }
  fit.f_shared = detail::fit_decay_factor(data, {Channel::As, Channel::Bs, Channel::Bi}, kappa0);
  fit.f_idler_a = fit[Channel::Ai].f;
  return fit;
}

inline DetectorMeans fitted_means(const LossFit& fit, double kappa) {
  return {fit[Channel::As].model(kappa), fit[Channel::Ai].model(kappa), fit[Channel::Bs].model(kappa),
          fit[Channel::Bi].model(kappa)};
}

inline Visibility extrapolate_visibility(const LossFit& fit, double kappa) {
  require(kappa >= 0, "kappa must be >= 0");
  return visibility(fitted_means(fit, kappa));
}

// kappa -> infinity of the fitted means (cosh^2 and sinh^2 share the leading growth).
inline Visibility high_gain_visibility(const LossFit& fit) {
  DetectorMeans m;
  auto lim = [&](Channel c) {
    const auto& cf = fit[c];
    return cf.n0 + (cf.n0_partner + 1) * std::exp(-cf.f);
  };
  m.As = lim(Channel::As), m.Ai = lim(Channel::Ai), m.Bs = lim(Channel::Bs), m.Bi = lim(Channel::Bi);
  return visibility(m);
}

// Closed-form high-gain visibility with a single f for all channels (x = Gamma dt_tot).
inline double high_gain_visibility(double x, double f, double n_th) {
  return 1.0 / (1 + 2 * std::exp(x - f) + 2 * n_th * std::exp(x) * (1 + std::exp(-f)) * (1 - std::exp(-x)));
}
inline double high_gain_visibility_low_temperature(double x) { return 1.0 / (1 + 2 * std::exp(x / 2)); }
inline double high_gain_visibility_low_loss(double x, double n_th) { return 1.0 / (3 + 4 * n_th * x); }

inline double total_duration(const Durations& d) { return d.h1 + d.ps + d.twpa + d.h2; }

// Channel means at kappa = 0 from pure loss along the whole chain.
inline DetectorMeans kappa0_outputs(const ExperimentConfig& cfg) {
  const double g = cfg.bath ? cfg.bath->gamma : 0.0;
  const double t = total_duration(cfg.dt);
  const double ns = cfg.bath_for(Species::signal).n_th(), ni = cfg.bath_for(Species::idler).n_th();
  return {n_out_kappa0(0, ns, g, t), n_out_kappa0(0, ni, g, t), n_out_kappa0(1, ns, g, t), n_out_kappa0(0, ni, g, t)};
}

inline std::vector<double> fit_kappa_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(0.1 * k);
  return g;
}

// Reduced-space means over a kappa grid.
inline std::vector<KappaRow> simulate_kappa_table(const ExperimentConfig& cfg, const std::vector<double>& grid,
                                                  unsigned jobs = 1) {
  std::vector<KappaRow> rows(grid.size());
  detail::parallel_for(grid.size(), jobs, [&](size_t i) {
    ExperimentConfig c = cfg;
    c.method = Method::reduced;
    c.kappa_up = c.kappa_low = grid[i];
    rows[i] = {grid[i], run_reduced(c).means};
  });
  return rows;
}

struct FMeshPoint {
  double dt_twpa;
  double temperature;
  double x;     // Gamma dt_tot
  double n_th;  // signal bath
  LossFit fit;
};

// f over a rectilinear (dt_twpa, temperature) grid; rows in dt-major order.
struct FMesh {
  std::vector<double> dt_twpa, temperature;
  std::vector<FMeshPoint> points;

  const FMeshPoint& at(size_t i, size_t j) const { return points[i * temperature.size() + j]; }

  // Bilinear interpolation of f_shared (idler = false) or f for (A,i) in (x, n_th).
  double interpolate(double x, double n_th, bool idler = false) const {
    require(dt_twpa.size() >= 2 && temperature.size() >= 2, "interpolation needs at least a 2x2 mesh");
    auto bracket = [](const std::vector<double>& v, double q) {
      size_t i = 0;
      while (i + 2 < v.size() && q > v[i + 1]) ++i;
      return i;
    };
    std::vector<double> xs, ns;
    for (size_t i = 0; i < dt_twpa.size(); ++i) xs.push_back(at(i, 0).x);
    for (size_t j = 0; j < temperature.size(); ++j) ns.push_back(at(0, j).n_th);
    const size_t i = bracket(xs, x), j = bracket(ns, n_th);
    const double u = (x - xs[i]) / (xs[i + 1] - xs[i]);
    const double w = (n_th - ns[j]) / (ns[j + 1] - ns[j]);
    auto f = [&](size_t a, size_t b) { return idler ? at(a, b).fit.f_idler_a : at(a, b).fit.f_shared; };
    return (1 - u) * (1 - w) * f(i, j) + u * (1 - w) * f(i + 1, j) + (1 - u) * w * f(i, j + 1) + u * w * f(i + 1, j + 1);
  }
};

inline FMesh fit_f_mesh(const ExperimentConfig& base, const std::vector<double>& dt_twpa,
                        const std::vector<double>& temperature, unsigned jobs = 1) {
  require(base.bath.has_value(), "f mesh needs a bath (loss rate)");
  FMesh mesh{dt_twpa, temperature, std::vector<FMeshPoint>(dt_twpa.size() * temperature.size())};
  detail::parallel_for(mesh.points.size(), jobs, [&](size_t k) {
    ExperimentConfig c = base;
    c.dt.twpa = dt_twpa[k / temperature.size()];
    c.bath = BathSpec(base.bath->gamma, temperature[k % temperature.size()], base.omega_signal);
    auto table = simulate_kappa_table(c, fit_kappa_grid());
    mesh.points[k] = {c.dt.twpa, c.bath->temperature, c.bath->gamma * total_duration(c.dt),
                      c.bath_for(Species::signal).n_th(), fit_f(table, kappa0_outputs(c))};
  });
  return mesh;
}

}  // namespace twpa
