#pragma once

// Numerical certification of the hybrid-Lyapunov inequalities on a compact
// box, the epsilon sweep producing parameter sets for the engine, and the
// observer-error certificate.
//
// Both inequalities are checked pointwise on a uniform 4-D grid over
// (x1, x2, e1, e2), once with the true nonlinear closed loop and once per
// polytopic vertex. The sweep additionally uses an exact eigenvalue test of
// the vertex quadratic forms, which covers every direction and not just the
// sampled ones. Certification is planar (n_x = n_e = 2).

#include "hybridstc/lyapunov.hpp"
#include "hybridstc/robot_arm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hybridstc {

using Vec4 = Eigen::Vector4d;

struct CertGrid {
  std::array<double, 4> half_width{10.0, 10.0, 10.0, 10.0};  // x1, x2, e1, e2
  int samples = 50;                                         // per axis

  void validate() const;
  CertGrid refined() const;
  nlohmann::json to_json() const;
};

/// x_p' = f(x_p, e) together with its polytopic embedding
/// f = A x_p + B(a~) e, a~ ranging over the segment between the two vertices.
struct PlanarClosedLoop {
  std::function<robot_arm::Vec2(const robot_arm::Vec2&, const robot_arm::Vec2&)> f;
  robot_arm::Mat2 A;
  std::array<robot_arm::Mat2, 2> B;
};

PlanarClosedLoop robot_arm_closed_loop(const robot_arm::Params& p);

/// Worst scale-normalized slack of each inequality over the grid:
///   flow:  (L W + H - <dW/de, g>) / (1 + |x| + |e|),   g = -f
///   decay: (-eps V - H^2 + gamma^2 W^2 - <grad V, f>) / (1 + |x|^2 + |e|^2)
struct MarginReport {
  double flow_margin = 0.0;
  double decay_margin = 0.0;
  Vec4 flow_witness = Vec4::Zero();   // (x1, x2, e1, e2) of the worst flow slack
  Vec4 decay_witness = Vec4::Zero();  // same for the decay inequality
  bool pass = false;

  static constexpr double slack = -1e-9;
};

MarginReport check_assumption1(const ParameterSet& set, const LyapunovData& lyap, const PlanarClosedLoop& loop,
                               const CertGrid& grid);

/// Smallest L certified by the exact vertex bound, available when H_x = A
/// and W(e) = |e|: max over vertices of lambda_max(sym(H_e - B)).
std::optional<double> vertex_flow_bound(const LyapunovData& lyap, const PlanarClosedLoop& loop);

/// Smallest gamma (bisection, relative tolerance `rel_tol`, returned from the
/// passing side) such that the vertex quadratic forms of the decay inequality
/// are negative semidefinite; nullopt if no gamma works.
std::optional<double> vertex_decay_gamma(double epsilon, const LyapunovData& lyap, const PlanarClosedLoop& loop,
                                         double rel_tol = 1e-3);

/// 0.01 followed by 22 values -logspace(log10(0.05), log10(20)).
std::vector<double> default_eps_grid();

struct SweepOptions {
  double delta = 0.999;
  double rel_tol = 1e-3;
  bool refine = true;  // drop sets that fail on the 2x refined grid
};

struct SweepResult {
  std::vector<ParameterSet> sets;                           // sorted as the engine expects
  std::vector<std::pair<double, std::string>> skipped;      // (epsilon, reason)
};

SweepResult sweep_parameter_sets(const LyapunovData& lyap, const PlanarClosedLoop& loop,
                                 const std::vector<double>& eps_grid, const CertGrid& grid,
                                 const SweepOptions& opt = {});

struct ObserverReport {
  bool theta1_positive = false;
  bool theta2_dominates = false;  // theta2 + a~ > 0 at both vertices
  bool quadratic_certificate = false;
  robot_arm::Mat2 P_o = robot_arm::Mat2::Identity();
  double worst_eigenvalue = 0.0;  // max eig of A_o'P_o + P_o A_o over vertices

  bool pass() const { return theta1_positive && theta2_dominates; }
};

ObserverReport certify_observer(const robot_arm::Params& p);

/// Parameter-set cache with grid/V metadata and content hashes.
struct ParameterCache {
  std::vector<ParameterSet> sets;
  double delta = 0.999;
  std::string grid_hash;
  std::string content_hash;
};

/// Hash of everything the sweep result depends on.
std::string sweep_input_hash(const LyapunovData& lyap, const CertGrid& grid, const std::vector<double>& eps_grid,
                             const robot_arm::Params& p, double delta);

nlohmann::json lyapunov_to_json(const LyapunovData& lyap);
LyapunovData lyapunov_from_json(const nlohmann::json& j);

nlohmann::json parameter_cache_to_json(const std::vector<ParameterSet>& sets, double delta, const CertGrid& grid,
                                       const LyapunovData& lyap, const std::string& grid_hash);

/// Throws std::runtime_error when the content hash does not match.
ParameterCache parameter_cache_from_json(const nlohmann::json& j);

}  // namespace hybridstc
