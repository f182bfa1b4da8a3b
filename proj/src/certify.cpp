#include "hybridstc/certify.hpp"

#include "hybridstc/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hybridstc {

using robot_arm::Mat2;
using robot_arm::Vec2;

void CertGrid::validate() const {
  if (samples < 2) throw std::invalid_argument("certification grid needs at least 2 samples per axis");
  for (double w : half_width)
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("certification box must be strictly positive");
}

CertGrid CertGrid::refined() const {
  CertGrid g = *this;
  g.samples = 2 * samples;
  return g;
}

nlohmann::json CertGrid::to_json() const {
  return {{"half_width", half_width}, {"samples", samples}};
}

PlanarClosedLoop robot_arm_closed_loop(const robot_arm::Params& p) {
  const auto poly = robot_arm::polytopic(p);
  PlanarClosedLoop loop;
  loop.f = [p](const Vec2& x, const Vec2& e) { return robot_arm::closed_loop_rhs(x, e, p); };
  loop.A = poly.A;
  loop.B = poly.B;
  return loop;
}

namespace {

struct PlanarLyapunov {
  Mat2 P, M, MtM, Hx, He;
};

PlanarLyapunov planar(const LyapunovData& lyap) {
  if (lyap.state_dim() != 2 || lyap.error_dim() != 2 || lyap.W_weight().rows() != 2 || lyap.H_x().rows() != 2)
    throw std::invalid_argument("certification supports planar Lyapunov data only");
  PlanarLyapunov out;
  out.P = lyap.P();
  out.M = lyap.W_weight();
  out.MtM = out.M.transpose() * out.M;
  out.Hx = lyap.H_x();
  out.He = lyap.H_e();
  return out;
}

std::vector<double> axis(double half_width, int samples) {
  std::vector<double> v(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) v[static_cast<std::size_t>(i)] = -half_width + 2.0 * half_width * i / (samples - 1);
  return v;
}

// Calls visit(x, e, f) for every grid point and every closed-loop variant
// (nonlinear plus both vertices).
template <class Visit>
void for_each_sample(const PlanarClosedLoop& loop, const CertGrid& grid, Visit&& visit) {
  grid.validate();
  const auto a0 = axis(grid.half_width[0], grid.samples);
  const auto a1 = axis(grid.half_width[1], grid.samples);
  const auto a2 = axis(grid.half_width[2], grid.samples);
  const auto a3 = axis(grid.half_width[3], grid.samples);
  for (double x1 : a0)
    for (double x2 : a1) {
      const Vec2 x(x1, x2);
      const Vec2 Ax = loop.A * x;
      for (double e1 : a2)
        for (double e2 : a3) {
          const Vec2 e(e1, e2);
          visit(x, e, loop.f(x, e));
          visit(x, e, Vec2(Ax + loop.B[0] * e));
          visit(x, e, Vec2(Ax + loop.B[1] * e));
        }
    }
}

Vec4 stack(const Vec2& x, const Vec2& e) { return Vec4(x[0], x[1], e[0], e[1]); }

}  // namespace

MarginReport check_assumption1(const ParameterSet& set, const LyapunovData& lyap, const PlanarClosedLoop& loop,
                               const CertGrid& grid) {
  validate(set);
  const auto pl = planar(lyap);
  MarginReport rep;
  rep.flow_margin = std::numeric_limits<double>::infinity();
  rep.decay_margin = std::numeric_limits<double>::infinity();
  const double g2 = set.gamma * set.gamma;

  for_each_sample(loop, grid, [&](const Vec2& x, const Vec2& e, const Vec2& f) {
    const Vec2 Me = pl.M * e;
    const double W = Me.norm();
    const double H = (pl.Hx * x + pl.He * e).norm();
    const double nx = x.norm(), ne = e.norm();
    if (W > 0.0) {
      // <dW/de, g> with g = -f
      const double dWg = -(pl.MtM * e).dot(f) / W;
      const double s13 = (set.L * W + H - dWg) / (1.0 + nx + ne);
      if (s13 < rep.flow_margin) {
        rep.flow_margin = s13;
        rep.flow_witness = stack(x, e);
      }
    }
    const double V = x.dot(pl.P * x);
    const double dV = 2.0 * (pl.P * x).dot(f);
    const double s14 = (-set.epsilon * V - H * H + g2 * W * W - dV) / (1.0 + nx * nx + ne * ne);
    if (s14 < rep.decay_margin) {
      rep.decay_margin = s14;
      rep.decay_witness = stack(x, e);
    }
  });
  rep.pass = rep.flow_margin >= MarginReport::slack && rep.decay_margin >= MarginReport::slack;
  return rep;
}

std::optional<double> vertex_flow_bound(const LyapunovData& lyap, const PlanarClosedLoop& loop) {
  const auto pl = planar(lyap);
  if ((pl.Hx - loop.A).norm() > 1e-12 * (1.0 + loop.A.norm())) return std::nullopt;
  if ((pl.M - Mat2::Identity()).norm() > 1e-12) return std::nullopt;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& B : loop.B) {
    const Mat2 D = pl.He - B;
    const Mat2 S = 0.5 * (D + D.transpose());
    worst = std::max(worst, Eigen::SelfAdjointEigenSolver<Mat2>(S).eigenvalues().maxCoeff());
  }
  return worst;
}

namespace {

// Largest eigenvalue over the vertices of the decay quadratic form in (x, e):
//   [PA + A'P + eps P + Hx'Hx,  PB + Hx'He ]
//   [        *               ,  He'He - gamma^2 M'M]
double decay_form_max_eig(double epsilon, double gamma, const PlanarLyapunov& pl, const PlanarClosedLoop& loop) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& B : loop.B) {
    Eigen::Matrix4d F;
    F.topLeftCorner<2, 2>() = pl.P * loop.A + loop.A.transpose() * pl.P + epsilon * pl.P + pl.Hx.transpose() * pl.Hx;
    F.topRightCorner<2, 2>() = pl.P * B + pl.Hx.transpose() * pl.He;
    F.bottomLeftCorner<2, 2>() = F.topRightCorner<2, 2>().transpose();
    F.bottomRightCorner<2, 2>() = pl.He.transpose() * pl.He - gamma * gamma * pl.MtM;
    worst = std::max(worst, Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(F).eigenvalues().maxCoeff());
  }
  return worst;
}

}  // namespace

std::optional<double> vertex_decay_gamma(double epsilon, const LyapunovData& lyap, const PlanarClosedLoop& loop,
                                         double rel_tol) {
  const auto pl = planar(lyap);
  auto passes = [&](double g) { return decay_form_max_eig(epsilon, g, pl, loop) <= 0.0; };
  double hi = 1.0;
  while (!passes(hi)) {
    hi *= 2.0;
    if (hi > 1e8) return std::nullopt;
  }
  double lo = 0.0;
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (passes(mid) ? hi : lo) = mid;
  }
  return hi;
}

std::vector<double> default_eps_grid() {
  std::vector<double> out{0.01};
  const double lo = std::log10(0.05), hi = std::log10(20.0);
  for (int k = 0; k < 22; ++k) out.push_back(-std::pow(10.0, lo + (hi - lo) * k / 21.0));
  return out;
}

SweepResult sweep_parameter_sets(const LyapunovData& lyap, const PlanarClosedLoop& loop,
                                 const std::vector<double>& eps_grid, const CertGrid& grid, const SweepOptions& opt) {
  grid.validate();
  const auto pl = planar(lyap);

  // Grid requirements: L >= (<dW/de, g> - H) / W, and per epsilon
  // gamma^2 >= (<grad V, f> + eps V + H^2) / W^2; points with W = 0 need
  // <grad V, f> + eps V + H^2 <= 0 outright.
  double L_grid = 0.0;
  for_each_sample(loop, grid, [&](const Vec2& x, const Vec2& e, const Vec2& f) {
    const double W = (pl.M * e).norm();
    if (W == 0.0) return;
    const double H = (pl.Hx * x + pl.He * e).norm();
    L_grid = std::max(L_grid, (-(pl.MtM * e).dot(f) / W - H) / W);
  });
  double L = L_grid;
  if (auto Lv = vertex_flow_bound(lyap, loop)) L = std::max(L, *Lv);
  L = std::max(L * (1.0 + opt.rel_tol), 1e-6);

  SweepResult out;
  for (double eps : eps_grid) {
    double g2_grid = 0.0;
    bool infeasible = false;
    for_each_sample(loop, grid, [&](const Vec2& x, const Vec2& e, const Vec2& f) {
      const double W2 = (pl.M * e).squaredNorm();
      const double H = (pl.Hx * x + pl.He * e).norm();
      const double num = 2.0 * (pl.P * x).dot(f) + eps * x.dot(pl.P * x) + H * H;
      if (W2 == 0.0) {
        if (num > 1e-12 * (1.0 + x.squaredNorm())) infeasible = true;
        return;
      }
      g2_grid = std::max(g2_grid, num / W2);
    });
    const auto g_vertex = vertex_decay_gamma(eps, lyap, loop, opt.rel_tol);
    if (infeasible || !g_vertex) {
      out.skipped.emplace_back(eps, "no finite gamma certifies the decay inequality");
      continue;
    }
    ParameterSet set{eps, std::max(std::sqrt(g2_grid) * (1.0 + opt.rel_tol), *g_vertex), L};

    if (!check_assumption1(set, lyap, loop, grid).pass) {
      out.skipped.emplace_back(eps, "derived set failed the grid re-check");
      continue;
    }
    if (opt.refine && !check_assumption1(set, lyap, loop, grid.refined()).pass) {
      out.skipped.emplace_back(eps, "fragile: fails on the refined grid");
      continue;
    }
    out.sets.push_back(set);
  }

  const double delta = opt.delta;
  std::stable_sort(out.sets.begin(), out.sets.end(), [delta](const ParameterSet& a, const ParameterSet& b) {
    if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
    return scaled_interval(a, delta) > scaled_interval(b, delta);
  });
  return out;
}

ObserverReport certify_observer(const robot_arm::Params& p) {
  ObserverReport rep;
  const auto poly = robot_arm::polytopic(p);
  rep.theta1_positive = p.theta1 > 0.0;
  rep.theta2_dominates = std::all_of(poly.vertices.begin(), poly.vertices.end(),
                                     [&](double at) { return p.theta2 + at > 0.0; });

  // Coarse scan over P_o = [[1, p12], [p12, p22]].
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 160; ++i) {
    const double p12 = -2.0 + 4.0 * i / 160.0;
    for (int k = 0; k <= 120; ++k) {
      const double p22 = std::pow(10.0, -3.0 + 5.0 * k / 120.0);
      if (p22 <= p12 * p12) continue;
      Mat2 P;
      P << 1.0, p12, p12, p22;
      const double scale = Eigen::SelfAdjointEigenSolver<Mat2>(P).eigenvalues().maxCoeff();
      double worst = -std::numeric_limits<double>::infinity();
      for (const auto& Ao : poly.A_o) {
        const Mat2 Q = Ao.transpose() * P + P * Ao;
        worst = std::max(worst, Eigen::SelfAdjointEigenSolver<Mat2>(Q).eigenvalues().maxCoeff() / scale);
      }
      if (worst < best) {
        best = worst;
        rep.P_o = P;
      }
    }
  }
  rep.worst_eigenvalue = best;
  rep.quadratic_certificate = best < 0.0;
  return rep;
}

nlohmann::json lyapunov_to_json(const LyapunovData& lyap) {
  auto mat = [](const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json r = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
      rows.push_back(r);
    }
    return rows;
  };
  return {{"P", mat(lyap.P())}, {"W_weight", mat(lyap.W_weight())}, {"H_x", mat(lyap.H_x())}, {"H_e", mat(lyap.H_e())}};
}

LyapunovData lyapunov_from_json(const nlohmann::json& j) {
  auto mat = [&](const char* key) {
    const auto& rows = j.at(key);
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(rows.at(i).size()) != c) throw std::invalid_argument(std::string(key) + ": ragged matrix");
      for (Eigen::Index k = 0; k < c; ++k) m(i, k) = rows.at(i).at(k).get<double>();
    }
    return m;
  };
  return LyapunovData(mat("P"), mat("W_weight"), mat("H_x"), mat("H_e"));
}

std::string sweep_input_hash(const LyapunovData& lyap, const CertGrid& grid, const std::vector<double>& eps_grid,
                             const robot_arm::Params& p, double delta) {
  nlohmann::json j = {{"grid", grid.to_json()},
                      {"lyapunov", lyapunov_to_json(lyap)},
                      {"eps_grid", eps_grid},
                      {"model", {{"a", p.a}, {"b", p.b}}},
                      {"delta", delta}};
  return fnv1a_hex(j.dump());
}

namespace {

nlohmann::json sets_json(const std::vector<ParameterSet>& sets, double delta) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sets)
    arr.push_back({{"epsilon", s.epsilon},
                   {"gamma", s.gamma},
                   {"L", s.L},
                   {"t_max_effective", t_max(s.gamma, effective_rate(s, delta))}});
  return arr;
}

}  // namespace

nlohmann::json parameter_cache_to_json(const std::vector<ParameterSet>& sets, double delta, const CertGrid& grid,
                                       const LyapunovData& lyap, const std::string& grid_hash) {
  nlohmann::json arr = sets_json(sets, delta);
  return {{"format", "hybridstc-parameter-sets"},
          {"version", std::string(kVersion)},
          {"delta", delta},
          {"grid", grid.to_json()},
          {"grid_hash", grid_hash},
          {"lyapunov", lyapunov_to_json(lyap)},
          {"sets", arr},
          {"content_hash", fnv1a_hex(arr.dump())}};
}

ParameterCache parameter_cache_from_json(const nlohmann::json& j) {
  ParameterCache c;
  c.delta = j.at("delta").get<double>();
  c.grid_hash = j.at("grid_hash").get<std::string>();
  c.content_hash = j.at("content_hash").get<std::string>();
  for (const auto& s : j.at("sets")) {
    ParameterSet p{s.at("epsilon").get<double>(), s.at("gamma").get<double>(), s.at("L").get<double>()};
    validate(p);
    c.sets.push_back(p);
  }
  if (fnv1a_hex(sets_json(c.sets, c.delta).dump()) != c.content_hash)
    throw std::runtime_error("parameter cache: content hash mismatch");
  return c;
}

}  // namespace hybridstc
