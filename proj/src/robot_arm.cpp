#include "hybridstc/robot_arm.hpp"

#include <cmath>
#include <stdexcept>

namespace hybridstc::robot_arm {

void validate(const Params& p) {
  if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.theta1) || !std::isfinite(p.theta2))
    throw std::invalid_argument("robot_arm: parameters must be finite");
  if (p.b == 0.0) throw std::invalid_argument("robot_arm: b must be nonzero");
}

Vec2 plant_rhs(const Vec2& x_p, double u_hat, const Params& p) {
  return {x_p[1], -p.a * std::sin(x_p[0]) + p.b * u_hat};
}

double controller(const Vec2& x, const Params& p) {
  return (p.a * std::sin(x[0]) - x[0] - x[1]) / p.b;
}

Vec2 observer_rhs(const Vec2& x_o, double u_hat, double y, const Params& p) {
  const double innovation = y - x_o[0];
  return {x_o[1] + p.theta1 * innovation, -p.a * std::sin(x_o[0]) + p.b * u_hat + p.theta2 * innovation};
}

Vec2 closed_loop_rhs(const Vec2& x_p, const Vec2& e, const Params& p) {
  return plant_rhs(x_p, controller(x_p + e, p), p);
}

double mean_value_gain(double x1, double e1, const Params& p) {
  // Well-conditioned form: sin(x+e) - sin(x) = 2 cos(x + e/2) sin(e/2).
  const double half = 0.5 * e1;
  if (std::abs(e1) < 1e-8) return p.a * std::cos(x1 + half);
  return p.a * std::cos(x1 + half) * std::sin(half) / half;
}

Mat2 PolytopicAbstraction::error_input(double a_tilde) {
  Mat2 B;
  B << 0.0, 0.0, a_tilde - 1.0, -1.0;
  return B;
}

PolytopicAbstraction polytopic(const Params& p) {
  PolytopicAbstraction out;
  out.A << 0.0, 1.0, -1.0, -1.0;
  out.vertices = {-p.a, p.a};
  for (std::size_t k = 0; k < 2; ++k) {
    out.B[k] = PolytopicAbstraction::error_input(out.vertices[k]);
    out.A_o[k] << -p.theta1, 1.0, -p.theta2 + out.vertices[k], 0.0;
  }
  return out;
}

LyapunovData default_lyapunov(const Params& p) {
  const auto poly = polytopic(p);
  const Mat A = poly.A;
  const Mat P = 2.5 * solve_lyapunov(A, 2.0 * Mat::Identity(2, 2));
  Mat H_e(2, 2);
  H_e << -2.0, 1.7, -4.9, -7.1;
  return LyapunovData(P, Mat::Identity(2, 2), A, H_e);
}

RobotArmModel::RobotArmModel(Params p) : p_(p) { validate(p_); }

Vec RobotArmModel::plant_rhs(const Vec& x_p, const Vec& u_hat) const {
  return robot_arm::plant_rhs(Vec2(x_p), u_hat[0], p_);
}

Vec RobotArmModel::output(const Vec& x_p) const {
  Vec y(1);
  y[0] = x_p[0];
  return y;
}

Vec RobotArmModel::observer_rhs(const Vec& x_o, const Vec& u_hat, const Vec& y) const {
  return robot_arm::observer_rhs(Vec2(x_o), u_hat[0], y[0], p_);
}

Vec RobotArmModel::controller(const Vec& x) const {
  Vec u(1);
  u[0] = robot_arm::controller(Vec2(x), p_);
  return u;
}

}  // namespace hybridstc::robot_arm
