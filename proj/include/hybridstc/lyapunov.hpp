#pragma once

// Hybrid-Lyapunov machinery: the maximal sampling interval T_max, the
// Riccati comparison function phi, the combined function
// U = V(x) + gamma * phi(tau) * W(e)^2 and its decay envelope.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace hybridstc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One (epsilon, gamma, L) triple for which the Lyapunov inequalities hold.
struct ParameterSet {
  double epsilon = 0.0;  // decay (>0) or growth (<0) rate, 1/s
  double gamma = 1.0;    // 1/s, > 0
  double L = 1.0;        // 1/s, > 0
};

/// Throws std::invalid_argument unless gamma > 0, L > 0 and epsilon is finite.
void validate(const ParameterSet& set);

/// V(x) = x'Px, W(e) = |M e|, H(x, e) = |H_x x + H_e e|.
class LyapunovData {
 public:
  LyapunovData() = default;
  /// Validates shapes and positive definiteness of P and M'M.
  LyapunovData(Mat P, Mat W_weight, Mat H_x, Mat H_e);

  double V(const Vec& x) const { return x.dot(P_ * x); }
  Vec grad_V(const Vec& x) const { return 2.0 * (P_ * x); }
  double W(const Vec& e) const { return (M_ * e).norm(); }
  /// Gradient of W; zero at e = 0 where W is not differentiable.
  Vec grad_W(const Vec& e) const;
  double H(const Vec& x, const Vec& e) const { return (H_x_ * x + H_e_ * e).norm(); }

  const Mat& P() const { return P_; }
  const Mat& W_weight() const { return M_; }
  const Mat& H_x() const { return H_x_; }
  const Mat& H_e() const { return H_e_; }
  Eigen::Index state_dim() const { return P_.rows(); }
  Eigen::Index error_dim() const { return M_.cols(); }

 private:
  Mat P_, M_, H_x_, H_e_;
};

/// Solves A'P + PA = -Q for P (A Hurwitz, Q symmetric) by vectorization.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

/// Effective rate max{L + eps/2, 1 - delta} used as the second T_max argument.
double effective_rate(const ParameterSet& set, double delta);

/// Maximal allowable sampling interval:
///   (1/(ell r)) atan(r)   gamma > ell
///   1/ell                 gamma = ell (relative band 1e-12)
///   (1/(ell r)) atanh(r)  gamma < ell
/// with r = sqrt(|(gamma/ell)^2 - 1|). Throws std::domain_error for
/// non-positive arguments.
double t_max(double gamma, double ell);

/// delta * T_max(gamma, max{L + eps/2, 1 - delta}).
double scaled_interval(const ParameterSet& set, double delta);

struct PhiParams {
  double gamma = 1.0;
  double ell = 1.0;
  double lambda = 0.01;  // phi(0) = 1/lambda
};

struct PhiSolveOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  /// Stop at the first zero crossing instead of integrating to the horizon.
  bool stop_at_zero = false;
};

/// phi sampled at the accepted steps of an adaptive integration of
///   phi' = -2 ell phi - gamma (phi^2 + 1),  phi(0) = 1/lambda.
/// Evaluation between samples integrates onward from the preceding sample.
class PhiCurve {
 public:
  PhiCurve(PhiParams params, std::vector<double> tau, std::vector<double> phi,
           std::optional<double> first_zero);

  const PhiParams& params() const { return params_; }
  const std::vector<double>& tau() const { return tau_; }
  const std::vector<double>& values() const { return phi_; }
  double horizon() const { return tau_.back(); }
  /// First tau with phi(tau) = 0, if reached within the horizon.
  std::optional<double> first_zero() const { return zero_; }
  double slope(double phi) const;
  double operator()(double tau) const;

 private:
  PhiParams params_;
  std::vector<double> tau_;
  std::vector<double> phi_;
  std::optional<double> zero_;
};

/// Throws std::invalid_argument on bad parameters and IntegrationError (with
/// the failing tau) when the tolerance cannot be met, e.g. past the
/// finite-time blow-up of phi.
PhiCurve phi_solve(const PhiParams& params, double horizon, const PhiSolveOptions& opt = {});

/// U = V + gamma * phi * W^2.
inline double u_value(double V_val, double gamma, double phi_val, double W_val) {
  return V_val + gamma * phi_val * W_val * W_val;
}

/// Largest lambda from {1e-2, 1e-3, ..., 1e-9} whose phi stays nonnegative on
/// [0, interval]. Throws std::domain_error if none does.
double envelope_lambda(const ParameterSet& set, double delta, double interval);

/// Densely sampled plant state and network-plus-observer error on one flow
/// interval, tau measured from the preceding jump.
struct FlowSegment {
  double interval = 0.0;
  std::vector<double> tau;
  std::vector<Vec> x_p;
  std::vector<Vec> e;
};

struct EnvelopeReport {
  double u_start = 0.0;
  /// max over samples of U(tau) - exp(-eps tau) U(0)
  double decay_violation = 0.0;
  /// max over samples of V(tau) - U(tau)
  double bound_violation = 0.0;
  double worst_tau = 0.0;
  double lambda = 0.0;

  bool holds(double rel_tol) const {
    const double tol = rel_tol * (1.0 + u_start);
    return decay_violation <= tol && bound_violation <= tol;
  }
};

/// Evaluates the decay envelope U(tau) <= exp(-eps tau) U(0) and the bound
/// V <= U on a sampled flow interval. Throws std::domain_error when the
/// interval is not shorter than T_max(gamma, max{L + eps/2, 1 - delta}).
EnvelopeReport envelope_check(const FlowSegment& segment, const ParameterSet& set,
                              const LyapunovData& lyap, double delta, double lambda);

}  // namespace hybridstc
