#include "hybridstc/lyapunov.hpp"

#include "hybridstc/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hybridstc {

void validate(const ParameterSet& set) {
  if (!std::isfinite(set.epsilon)) throw std::invalid_argument("parameter set: epsilon must be finite");
  if (!(set.gamma > 0.0) || !std::isfinite(set.gamma))
    throw std::invalid_argument("parameter set: gamma must be positive");
  if (!(set.L > 0.0) || !std::isfinite(set.L))
    throw std::invalid_argument("parameter set: L must be positive");
}

LyapunovData::LyapunovData(Mat P, Mat W_weight, Mat H_x, Mat H_e)
    : P_(std::move(P)), M_(std::move(W_weight)), H_x_(std::move(H_x)), H_e_(std::move(H_e)) {
  const auto n = P_.rows();
  if (P_.cols() != n || n == 0) throw std::invalid_argument("LyapunovData: P must be square");
  if ((P_ - P_.transpose()).norm() > 1e-12 * (1.0 + P_.norm()))
    throw std::invalid_argument("LyapunovData: P must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(P_);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("LyapunovData: P must be positive definite");
  const auto ne = M_.cols();
  if (M_.rows() == 0 || ne == 0) throw std::invalid_argument("LyapunovData: empty W weight");
  Eigen::SelfAdjointEigenSolver<Mat> weig(M_.transpose() * M_);
  if (weig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("LyapunovData: W weight must have full column rank");
  if (H_x_.cols() != n || H_e_.cols() != ne || H_x_.rows() != H_e_.rows())
    throw std::invalid_argument("LyapunovData: H_x/H_e shapes inconsistent");
}

Vec LyapunovData::grad_W(const Vec& e) const {
  const Vec me = M_ * e;
  const double n = me.norm();
  if (n == 0.0) return Vec::Zero(e.size());
  return M_.transpose() * me / n;
}

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
  const auto n = A.rows();
  const Mat I = Mat::Identity(n, n);
  // vec(A'P + PA) = (I (x) A' + A' (x) I) vec(P)
  Mat K = Mat::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) += I(i, j) * A.transpose();
      K.block(i * n, j * n, n, n) += A(j, i) * I;
    }
  Vec rhs = -Eigen::Map<const Vec>(Q.data(), n * n);
  Vec p = K.fullPivLu().solve(rhs);
  Mat P = Eigen::Map<Mat>(p.data(), n, n);
  return 0.5 * (P + P.transpose());
}

double effective_rate(const ParameterSet& set, double delta) {
  return std::max(set.L + set.epsilon / 2.0, 1.0 - delta);
}

double t_max(double gamma, double ell) {
  if (!(gamma > 0.0) || !(ell > 0.0) || !std::isfinite(gamma) || !std::isfinite(ell))
    throw std::domain_error("t_max: gamma and ell must be positive and finite");
  if (std::abs(gamma - ell) <= 1e-12 * std::max(gamma, ell)) return 1.0 / ell;
  const double ratio = gamma / ell;
  const double r = std::sqrt(std::abs(ratio * ratio - 1.0));
  if (gamma > ell) return std::atan(r) / (ell * r);
  return std::atanh(r) / (ell * r);
}

double scaled_interval(const ParameterSet& set, double delta) {
  return delta * t_max(set.gamma, effective_rate(set, delta));
}

PhiCurve::PhiCurve(PhiParams params, std::vector<double> tau, std::vector<double> phi,
                   std::optional<double> first_zero)
    : params_(params), tau_(std::move(tau)), phi_(std::move(phi)), zero_(first_zero) {}

double PhiCurve::slope(double phi) const {
  return -2.0 * params_.ell * phi - params_.gamma * (phi * phi + 1.0);
}

double PhiCurve::operator()(double tau) const {
  if (tau <= tau_.front()) return phi_.front();
  if (tau >= tau_.back()) return phi_.back();
  const auto it = std::upper_bound(tau_.begin(), tau_.end(), tau);
  const auto i = static_cast<std::size_t>(it - tau_.begin()) - 1;
  // Re-integrate from the preceding sample with fixed RK4 substeps; the
  // scalar Riccati right-hand side is cheap and this keeps evaluation at the
  // accuracy of the adaptive solve.
  const double span = tau - tau_[i];
  const int n = 4 + static_cast<int>(std::ceil(span / 1e-3));
  const double h = span / n;
  double p = phi_[i];
  for (int k = 0; k < n; ++k) {
    const double k1 = slope(p), k2 = slope(p + 0.5 * h * k1), k3 = slope(p + 0.5 * h * k2), k4 = slope(p + h * k3);
    p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return p;
}

PhiCurve phi_solve(const PhiParams& params, double horizon, const PhiSolveOptions& opt) {
  if (!(horizon > 0.0)) throw std::invalid_argument("phi_solve: horizon must be positive");
  if (!(params.gamma > 0.0) || !(params.ell > 0.0))
    throw std::invalid_argument("phi_solve: gamma and ell must be positive");
  if (!(params.lambda > 0.0 && params.lambda < 1.0))
    throw std::invalid_argument("phi_solve: lambda must lie in (0, 1)");

  using S = Eigen::Matrix<double, 1, 1>;
  const double g = params.gamma, l = params.ell;
  auto rhs = [g, l](double, const S& y) {
    S d;
    d[0] = -2.0 * l * y[0] - g * (y[0] * y[0] + 1.0);
    return d;
  };

  std::vector<double> tau{0.0};
  std::vector<double> phi{1.0 / params.lambda};
  std::optional<double> zero;

  OdeOptions ode;
  ode.rtol = opt.rtol;
  ode.atol = opt.atol;
  S y;
  y[0] = phi.front();
  integrate_dense(rhs, y, 0.0, horizon, ode, [&](const DenseStep<S>& step) {
    if (!zero && step.start()[0] > 0.0 && step.end()[0] <= 0.0) {
      // Bisection on the dense-output polynomial.
      double lo = step.t0, hi = step.t1;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (step(mid)[0] > 0.0 ? lo : hi) = mid;
      }
      zero = 0.5 * (lo + hi);
      if (opt.stop_at_zero) {
        tau.push_back(*zero);
        phi.push_back(0.0);
        return false;
      }
    }
    tau.push_back(step.t1);
    phi.push_back(step.end()[0]);
    return true;
  });
  return PhiCurve(params, std::move(tau), std::move(phi), zero);
}

double envelope_lambda(const ParameterSet& set, double delta, double interval) {
  const double ell = effective_rate(set, delta);
  for (double lambda = 1e-2; lambda >= 1e-9; lambda /= 10.0) {
    PhiSolveOptions opt;
    opt.stop_at_zero = true;
    const auto curve = phi_solve({set.gamma, ell, lambda}, interval, opt);
    if (!curve.first_zero() || *curve.first_zero() >= interval) return lambda;
  }
  throw std::domain_error("envelope_lambda: phi crosses zero inside the interval for all lambda");
}

EnvelopeReport envelope_check(const FlowSegment& segment, const ParameterSet& set,
                              const LyapunovData& lyap, double delta, double lambda) {
  validate(set);
  const double ell = effective_rate(set, delta);
  const double limit = t_max(set.gamma, ell);
  if (!(segment.interval > 0.0) || segment.interval >= limit)
    throw std::domain_error("envelope_check: interval must lie in (0, T_max)");
  if (segment.tau.empty() || segment.tau.size() != segment.x_p.size() ||
      segment.tau.size() != segment.e.size())
    throw std::invalid_argument("envelope_check: inconsistent segment samples");

  const auto curve = phi_solve({set.gamma, ell, lambda}, segment.interval);

  EnvelopeReport rep;
  rep.lambda = lambda;
  rep.decay_violation = -std::numeric_limits<double>::infinity();
  rep.bound_violation = -std::numeric_limits<double>::infinity();
  double u0 = 0.0;
  for (std::size_t k = 0; k < segment.tau.size(); ++k) {
    const double tau = segment.tau[k];
    const double v = lyap.V(segment.x_p[k]);
    const double u = u_value(v, set.gamma, curve(tau), lyap.W(segment.e[k]));
    if (k == 0) u0 = u;
    const double dv = u - std::exp(-set.epsilon * (tau - segment.tau.front())) * u0;
    if (dv > rep.decay_violation) {
      rep.decay_violation = dv;
      rep.worst_tau = tau;
    }
    rep.bound_violation = std::max(rep.bound_violation, v - u);
  }
  rep.u_start = u0;
  return rep;
}

}  // namespace hybridstc
