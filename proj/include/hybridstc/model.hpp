#pragma once

#include "hybridstc/lyapunov.hpp"

#include <string>

namespace hybridstc {

/// Plant, observer and static controller of an output-feedback loop.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;

  /// x_p' = f_p(x_p, u_hat)
  virtual Vec plant_rhs(const Vec& x_p, const Vec& u_hat) const = 0;
  /// y = g_p(x_p)
  virtual Vec output(const Vec& x_p) const = 0;
  /// x_o' = f_o(x_o, u_hat, y)
  virtual Vec observer_rhs(const Vec& x_o, const Vec& u_hat, const Vec& y) const = 0;
  /// u = g_c(x)
  virtual Vec controller(const Vec& x) const = 0;
};

}  // namespace hybridstc
