#pragma once

// Adaptive Dormand-Prince 5(4) integrator with the classical 4th-order
// continuous extension. Works on any Eigen column vector type.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace hybridstc {

/// Thrown when the integrator cannot meet its tolerance. Carries the time at
/// which integration stopped.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double t)
      : std::runtime_error(what + " at t=" + std::to_string(t)), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 selects a step automatically
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 2'000'000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

/// One accepted step together with its dense-output polynomial.
template <class State>
class DenseStep {
 public:
  double t0 = 0.0;
  double t1 = 0.0;

  State operator()(double t) const {
    const double h = t1 - t0;
    if (h == 0.0) return r1_;
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    return r1_ + th * (r2_ + th1 * (r3_ + th * (r4_ + th1 * r5_)));
  }

  const State& start() const { return r1_; }
  const State& end() const { return y1_; }

 private:
  template <class S, class R, class O>
  friend OdeStats integrate_dense(R&&, S&, double, double, const OdeOptions&, O&&);

  State r1_, r2_, r3_, r4_, r5_, y1_;
};

namespace detail {

template <class State>
double error_norm(const State& err, const State& y0, const State& y1, const OdeOptions& opt) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    worst = std::max(worst, std::abs(err[i]) / sc);
  }
  return worst;
}

template <class State>
bool all_finite(const State& y) {
  return y.allFinite();
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 to t1 (t1 > t0), landing exactly on t1.
/// `on_step` is called after every accepted step with a DenseStep; returning
/// false stops integration early (y then holds the state at the step end).
template <class State, class Rhs, class OnStep>
OdeStats integrate_dense(Rhs&& rhs, State& y, double t0, double t1, const OdeOptions& opt,
                         OnStep&& on_step) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  OdeStats stats;
  if (!(t1 > t0)) {
    if (t1 == t0) return stats;
    throw std::invalid_argument("integrate_dense: t1 must not precede t0");
  }

  double t = t0;
  State k1 = rhs(t, y);
  ++stats.rhs_evals;
  if (!detail::all_finite(k1)) throw IntegrationError("non-finite derivative", t);

  double h = opt.initial_step;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic.
    State sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
    const double dn0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double dn1 = std::sqrt((k1.array() / sc.array()).square().mean());
    double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
    h0 = std::min(h0, t1 - t0);
    State y1 = y + h0 * k1;
    State k = rhs(t + h0, y1);
    ++stats.rhs_evals;
    const double dn2 = std::sqrt((((k - k1).array()) / sc.array()).square().mean()) / h0;
    const double dmax = std::max(dn1, dn2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min({h, opt.max_step, t1 - t0});

  DenseStep<State> step;
  bool last_rejected = false;
  const double span = t1 - t0;

  while (t < t1) {
    if (stats.accepted + stats.rejected >= opt.max_steps)
      throw IntegrationError("step budget exhausted", t);
    const double remaining = t1 - t;
    bool lands = false;
    if (h >= remaining || remaining - h <= 1e-13 * span) {
      h = remaining;
      lands = true;
    }
    if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      throw IntegrationError("step size underflow", t);

    State k2 = rhs(t + c2 * h, y + h * (a21 * k1));
    State k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    State k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    State k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    State k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    State y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    State k7 = rhs(t + h, y1);
    stats.rhs_evals += 6;

    State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = detail::error_norm(err, y, y1, opt);
    if (!std::isfinite(en) || !detail::all_finite(y1)) en = std::numeric_limits<double>::infinity();

    if (en <= 1.0) {
      const double t_new = lands ? t1 : t + h;
      step.t0 = t;
      step.t1 = t_new;
      step.r1_ = y;
      step.r2_ = y1 - y;
      step.r3_ = h * k1 - step.r2_;
      step.r4_ = step.r2_ - h * k7 - step.r3_;
      step.r5_ = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      step.y1_ = y1;
      ++stats.accepted;
      y = y1;
      k1 = k7;
      t = t_new;
      if (!on_step(static_cast<const DenseStep<State>&>(step))) return stats;
      double fac = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, opt.max_step);
      last_rejected = false;
    } else {
      ++stats.rejected;
      const double fac = std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -0.2)) : 0.1;
      h *= fac;
      last_rejected = true;
    }
  }
  return stats;
}

/// Convenience overload without a step observer.
template <class State, class Rhs>
OdeStats integrate(Rhs&& rhs, State& y, double t0, double t1, const OdeOptions& opt = {}) {
  return integrate_dense(std::forward<Rhs>(rhs), y, t0, t1, opt,
                         [](const DenseStep<State>&) { return true; });
}

}  // namespace hybridstc
