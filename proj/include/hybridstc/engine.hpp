#pragma once

// Dynamic self-triggered transmission scheduling: the windowed dynamic
// variable eta, the averaged value C and the per-parameter-set candidate
// intervals, combined by a gate/fallback rule into the next interval.

#include "hybridstc/lyapunov.hpp"

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace hybridstc {

enum class FeedbackMode { output, state };

std::string_view to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(std::string_view name);

struct StcConfig {
  double eps_ref = 0.01;
  double delta = 0.999;
  double v_max = 1e6;
  int window = 16;  // m; eta has m - 1 entries
  double v_floor = 1e-12;
  FeedbackMode mode = FeedbackMode::output;
  std::vector<ParameterSet> sets;
};

/// Discounted past Lyapunov values, oldest first.
struct DynVar {
  std::vector<double> eta;
};

enum class FallbackReason { none, gate, no_candidate };

std::string_view to_string(FallbackReason reason);

struct IntervalChoice {
  double interval = 0.0;
  std::size_t set_index = 0;  // 0-based into StcEngine::sets()
  bool fallback = false;
  FallbackReason reason = FallbackReason::none;
  double c_value = 0.0;
};

/// C = (v_obs + sum(eta)) / m.
double c_value(double v_obs, const DynVar& eta, int window);

/// Validated configuration with the per-set intervals precomputed.
class StcEngine {
 public:
  /// Sorts the sets by descending epsilon (ties: longer interval first) and
  /// validates eps_1 >= eps_ref > 0, delta in (0, 1), v_max > 0, m >= 2 and
  /// L_1 + eps_1/2 >= 1 - delta. Throws std::invalid_argument.
  explicit StcEngine(StcConfig cfg);

  const StcConfig& config() const { return cfg_; }
  const std::vector<ParameterSet>& sets() const { return cfg_.sets; }
  /// delta * T_max(gamma_i, max{L_i + eps_i/2, 1 - delta}).
  double set_interval(std::size_t i) const { return intervals_.at(i); }
  double t_min() const { return intervals_.front(); }
  double max_interval() const;

  /// Shift the window and append exp(-eps_ref * interval) * min{v_obs, v_max}
  /// (no clamp in state-feedback mode); older entries are discounted too.
  DynVar eta_update(const DynVar& eta, double v_obs, double interval) const;

  /// Admissible interval for set i, or nullopt if the decay constraint cannot
  /// be met by any positive interval.
  std::optional<double> candidate_interval(std::size_t i, double c_val, double v_obs) const;

  /// Maximizes the candidates over all sets, applying the V_max gate; never
  /// returns less than t_min.
  IntervalChoice next_interval(double v_obs, const DynVar& eta) const;

  /// eta with every entry min{v0, v_max} (v0 in state-feedback mode).
  DynVar initial_eta(double v0) const;

 private:
  StcConfig cfg_;
  std::vector<double> intervals_;
};

}  // namespace hybridstc
