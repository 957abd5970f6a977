#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "twpa/errors.hpp"
#include "twpa/fock.hpp"

namespace twpa {

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  double max_trace_drift = 0;  // max |Tr rho - 1| seen after accepted steps
  double last_error = 0;       // scaled error estimate of the last accepted step
};

namespace detail {

// Adaptive Dormand-Prince 5(4) with FSAL. rhs(t, y, dy) writes dy = f(t, y).
// on_step(y) is called after every accepted step.
inline void dormand_prince(const std::function<void(double, const Vec&, Vec&)>& rhs, Vec& y, double t0, double t1,
                           double atol, double rtol, IntegrationStats& stats,
                           const std::function<void(const Vec&)>& on_step = {}) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double span = t1 - t0;
  if (span <= 0) return;
  const Eigen::Index n = y.size();
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n), err(n);
  double t = t0;
  double h = span / 100;
  const double h_min = span * 1e-14;
  rhs(t, y, k1);
  while (t1 - t > span * 1e-15) {
    if (t + h > t1) h = t1 - t;
    tmp = y + h * a21 * k1;
    rhs(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, tmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, ynew, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      en = std::max(en, std::abs(err[i]) / sc);
    }
    if (!std::isfinite(en)) en = 1e10;
    if (en <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);
      ++stats.accepted;
      stats.last_error = en;
      if (on_step) on_step(y);
      h *= std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.2), 0.2, 5.0);
    } else {
      ++stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      if (h < h_min) throw ConvergenceError("Lindblad integration step size underflow", en * atol);
    }
  }
}

}  // namespace detail
}  // namespace twpa
