#pragma once

// Hybrid closed loop: plant and observer flow under a zero-order-held input
// between transmissions; at a transmission the held observer sample, the
// dynamic variable and the next interval are updated.

#include "hybridstc/engine.hpp"
#include "hybridstc/lyapunov.hpp"
#include "hybridstc/model.hpp"
#include "hybridstc/ode.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace hybridstc {

struct HybridState {
  Vec x_p;
  Vec x_o;
  Vec x_hat_o;  // last transmitted observer state
  DynVar eta;
  double tau = 0.0;
  double q = 0.0;
  double t = 0.0;
  long j = 0;

  /// e = x_hat_o - x_p (network plus observer error)
  Vec error() const { return x_hat_o - x_p; }
  /// e_o = x_o - x_p
  Vec observer_error() const { return x_o - x_p; }
};

/// Initial hybrid state before the transmission at t = 0.
HybridState make_initial_state(const Vec& x_p0, const Vec& x_o0);

struct TransmissionEvent {
  long j = 0;
  double t = 0.0;
  double interval = 0.0;
  std::size_t set_index = 0;  // 0-based; meaningless for periodic runs
  bool fallback = false;
  FallbackReason reason = FallbackReason::none;
  double v_obs = 0.0;
  double c = 0.0;
  double norm_xp = 0.0;
  double norm_eo = 0.0;
  std::vector<double> eta_before;  // eta used for C at this jump
};

struct FlowDerivative {
  Vec dx_p;
  Vec dx_o;
};

/// x_p' = f_p(x_p, g_c(x_hat_o)), x_o' = f_o(x_o, g_c(x_hat_o), g_p(x_p)).
FlowDerivative flow(const HybridState& state, const Model& model);

/// Executes a transmission: x_hat_o <- x_o, next interval from the engine,
/// eta updated with that interval, tau <- 0, q <- interval, j <- j + 1.
HybridState jump(const HybridState& state, const StcEngine& engine, const LyapunovData& lyap,
                 TransmissionEvent* event = nullptr);

enum class EtaInit { observed_value, zeros };

struct SimOptions {
  double horizon = 10.0;
  double output_step = 1e-3;
  bool record_trajectory = true;
  bool record_jump_states = false;
  EtaInit eta_init = EtaInit::observed_value;
  double divergence_bound = 1e9;
  OdeOptions ode{};
};

struct TrajectorySample {
  double t = 0.0;
  Vec x_p;
  Vec x_o;
  double u_hat = 0.0;
  double v_obs = 0.0;
  double v_plant = 0.0;
};

enum class RunStatus { ok, diverged, integration_failure };

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string diagnostic;
  std::vector<TrajectorySample> trajectory;
  std::vector<TransmissionEvent> events;  // includes the jump at t = 0
  std::vector<HybridState> jump_states;   // post-jump states, if requested
  HybridState final_state;

  /// Jumps with t_j in (0, horizon].
  std::size_t transmissions(double horizon) const;
  /// Smallest interval between consecutive transmissions.
  double min_interval() const;
};

/// STC closed loop on [0, horizon]. The jump at t = 0 computes the first
/// interval; jumps then follow exactly at t_j + q.
RunResult simulate_run(const HybridState& initial, const StcEngine& engine, const LyapunovData& lyap,
                       const Model& model, const SimOptions& opt);

/// Same loop with a fixed interval and no dynamic variable.
RunResult periodic_run(const HybridState& initial, double period, const LyapunovData& lyap,
                       const Model& model, const SimOptions& opt);

enum class ErrorBookkeeping {
  physical,  // e(0) = x_hat_o - x_p, i.e. the observer error right after a jump
  reset,     // e(0) = 0 as in the textbook jump map
};

/// Re-integrates one flow interval from a post-jump state and samples x_p and
/// e at `samples` equally spaced instants including both ends.
FlowSegment sample_flow_segment(const HybridState& post_jump, const Model& model, std::size_t samples,
                                ErrorBookkeeping bookkeeping = ErrorBookkeeping::physical,
                                const OdeOptions& ode = {});

}  // namespace hybridstc
