#pragma once

// Single-link robot arm with a feedback-linearizing controller and a
// high-gain Luenberger-type observer, plus the polytopic embedding of the
// sine nonlinearity used for certification.

#include "hybridstc/lyapunov.hpp"
#include "hybridstc/model.hpp"

#include <Eigen/Dense>

#include <array>

namespace hybridstc::robot_arm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Params {
  double a = 9.81 / 2.0;
  double b = 2.0;
  double theta1 = 10.0;
  double theta2 = 10.0;
};

/// Throws std::invalid_argument if b == 0 or a parameter is not finite.
void validate(const Params& p);

/// (x2, -a sin(x1) + b u_hat)
Vec2 plant_rhs(const Vec2& x_p, double u_hat, const Params& p);

/// b^-1 (a sin(x1) - x1 - x2)
double controller(const Vec2& x, const Params& p);

/// (x_o2 + theta1 (y - x_o1), -a sin(x_o1) + b u_hat + theta2 (y - x_o1))
Vec2 observer_rhs(const Vec2& x_o, double u_hat, double y, const Params& p);

/// Closed-loop plant with the controller fed x_p + e:
/// x_p' = f(x_p, e) = f_p(x_p, g_c(x_p + e)).
Vec2 closed_loop_rhs(const Vec2& x_p, const Vec2& e, const Params& p);

/// Divided difference a (sin(x1 + e1) - sin(x1)) / e1, so that
/// -a (sin(x1) - sin(x1 + e1)) = gain * e1; a cos(x1) at e1 = 0.
double mean_value_gain(double x1, double e1, const Params& p);

struct PolytopicAbstraction {
  Mat2 A;                            // closed-loop plant matrix
  std::array<double, 2> vertices{};  // a~ in {-a, +a}
  std::array<Mat2, 2> B;             // error input matrices at the vertices
  std::array<Mat2, 2> A_o;           // observer-error matrices at the vertices

  /// B(a~) = [[0, 0], [a~ - 1, -1]]
  static Mat2 error_input(double a_tilde);
};

/// x_p' = A x_p + B(a~) e with a~ = mean_value_gain(x1, e1) exactly.
PolytopicAbstraction polytopic(const Params& p);

/// Default Lyapunov data: V = x'Px with P = 2.5 * P0 where A'P0 + P0 A = -2I,
/// W(e) = |e|, H = |A x + H_e e| with a tuned H_e.
LyapunovData default_lyapunov(const Params& p = {});

/// Model adapter for the hybrid simulator.
class RobotArmModel final : public Model {
 public:
  explicit RobotArmModel(Params p = {});

  std::string name() const override { return "robot_arm"; }
  Eigen::Index state_dim() const override { return 2; }
  Eigen::Index input_dim() const override { return 1; }
  Eigen::Index output_dim() const override { return 1; }

  Vec plant_rhs(const Vec& x_p, const Vec& u_hat) const override;
  Vec output(const Vec& x_p) const override;
  Vec observer_rhs(const Vec& x_o, const Vec& u_hat, const Vec& y) const override;
  Vec controller(const Vec& x) const override;

  const Params& params() const { return p_; }

 private:
  Params p_;
};

}  // namespace hybridstc::robot_arm
