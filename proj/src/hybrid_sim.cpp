#include "hybridstc/hybrid_sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hybridstc {

HybridState make_initial_state(const Vec& x_p0, const Vec& x_o0) {
  if (x_p0.size() != x_o0.size()) throw std::invalid_argument("initial plant and observer dimensions differ");
  HybridState s;
  s.x_p = x_p0;
  s.x_o = x_o0;
  s.x_hat_o = x_o0;
  return s;
}

FlowDerivative flow(const HybridState& state, const Model& model) {
  if (state.tau > state.q) throw std::logic_error("flow: state outside the flow set (tau > q)");
  const Vec u_hat = model.controller(state.x_hat_o);
  return {model.plant_rhs(state.x_p, u_hat), model.observer_rhs(state.x_o, u_hat, model.output(state.x_p))};
}

namespace {

double observed_value(const HybridState& s, const StcEngine& engine, const LyapunovData& lyap) {
  return engine.config().mode == FeedbackMode::output ? lyap.V(s.x_o) : lyap.V(s.x_p);
}

// Shared transmission bookkeeping; `choose` fills interval/set/fallback.
HybridState apply_jump(const HybridState& state, const LyapunovData& lyap, TransmissionEvent& ev,
                       const std::function<DynVar(const HybridState&, TransmissionEvent&)>& choose) {
  HybridState next = state;
  ev.j = state.j;
  ev.t = state.t;
  ev.norm_xp = state.x_p.norm();
  ev.norm_eo = state.observer_error().norm();
  ev.eta_before = state.eta.eta;
  ev.v_obs = lyap.V(state.x_o);
  next.x_hat_o = state.x_o;
  next.eta = choose(state, ev);
  next.tau = 0.0;
  next.q = ev.interval;
  next.j = state.j + 1;
  return next;
}

}  // namespace

HybridState jump(const HybridState& state, const StcEngine& engine, const LyapunovData& lyap,
                 TransmissionEvent* event) {
  TransmissionEvent local;
  TransmissionEvent& ev = event ? *event : local;
  return apply_jump(state, lyap, ev, [&](const HybridState& s, TransmissionEvent& e) {
    const double v = observed_value(s, engine, lyap);
    const auto choice = engine.next_interval(v, s.eta);
    e.v_obs = v;
    e.c = choice.c_value;
    e.interval = choice.interval;
    e.set_index = choice.set_index;
    e.fallback = choice.fallback;
    e.reason = choice.reason;
    return engine.eta_update(s.eta, v, choice.interval);
  });
}

std::size_t RunResult::transmissions(double horizon) const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [horizon](const TransmissionEvent& e) {
    return e.t > 0.0 && e.t <= horizon * (1.0 + 1e-12);
  }));
}

double RunResult::min_interval() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < events.size(); ++k) m = std::min(m, events[k].t - events[k - 1].t);
  return m;
}

namespace {

using Scheduler = std::function<HybridState(const HybridState&, TransmissionEvent&)>;

RunResult run_loop(const HybridState& initial, const LyapunovData& lyap, const Model& model,
                   const SimOptions& opt, const Scheduler& schedule) {
  if (!(opt.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (opt.record_trajectory && !(opt.output_step > 0.0))
    throw std::invalid_argument("output step must be positive");

  RunResult res;
  const Eigen::Index n = model.state_dim();
  if (initial.x_p.size() != n || initial.x_o.size() != n)
    throw std::invalid_argument("initial state dimension does not match the model");

  HybridState s = initial;
  s.t = 0.0;
  s.tau = 0.0;
  s.j = 0;
  const double horizon = opt.horizon;
  const double t_end = horizon * (1.0 + 1e-12);
  long next_sample = 0;

  auto emit_sample = [&](double t, const Vec& z, double u_hat) {
    TrajectorySample ts;
    ts.t = t;
    ts.x_p = z.head(n);
    ts.x_o = z.tail(n);
    ts.u_hat = u_hat;
    ts.v_obs = lyap.V(ts.x_o);
    ts.v_plant = lyap.V(ts.x_p);
    res.trajectory.push_back(std::move(ts));
  };

  auto finite_and_bounded = [&](const HybridState& st) {
    return st.x_p.allFinite() && st.x_o.allFinite() && st.x_p.norm() <= opt.divergence_bound &&
           st.x_o.norm() <= opt.divergence_bound;
  };

  try {
    {
      TransmissionEvent ev;
      s = schedule(s, ev);
      res.events.push_back(std::move(ev));
      if (opt.record_jump_states) res.jump_states.push_back(s);
    }
    while (true) {
      const double t0 = s.t;
      const double t_next = s.t + s.q;
      const bool jump_follows = t_next <= t_end;
      const double t1 = jump_follows ? t_next : horizon;

      const Vec u_hat = model.controller(s.x_hat_o);
      const double u_scalar = u_hat.size() > 0 ? u_hat[0] : 0.0;
      Vec z(2 * n);
      z << s.x_p, s.x_o;
      auto rhs = [&](double, const Vec& zz) {
        Vec d(2 * n);
        const Vec xp = zz.head(n);
        d.head(n) = model.plant_rhs(xp, u_hat);
        d.tail(n) = model.observer_rhs(zz.tail(n), u_hat, model.output(xp));
        return d;
      };

      if (opt.record_trajectory) {
        // Grid points k * dt in [t0, t1); the final segment also takes t1.
        const bool include_end = !jump_follows;
        auto grid = [&] { return static_cast<double>(next_sample) * opt.output_step; };
        auto belongs = [&](double tk) { return include_end ? tk <= t1 * (1.0 + 1e-12) : tk < t1; };
        while (grid() < t0) ++next_sample;
        if (t1 > t0) {
          integrate_dense(rhs, z, t0, t1, opt.ode, [&](const DenseStep<Vec>& step) {
            const bool last = step.t1 >= t1;
            for (double tk = grid(); belongs(tk) && (tk <= step.t1 || last); tk = grid()) {
              emit_sample(tk, step(std::min(tk, step.t1)), u_scalar);
              ++next_sample;
            }
            return true;
          });
        } else if (include_end && belongs(grid())) {
          emit_sample(grid(), z, u_scalar);
          ++next_sample;
        }
      } else if (t1 > t0) {
        integrate(rhs, z, t0, t1, opt.ode);
      }

      s.x_p = z.head(n);
      s.x_o = z.tail(n);
      s.tau += t1 - t0;
      s.t = t1;
      if (!finite_and_bounded(s)) {
        std::ostringstream msg;
        msg << "state left the divergence bound " << opt.divergence_bound << " before t=" << s.t;
        res.status = RunStatus::diverged;
        res.diagnostic = msg.str();
        break;
      }
      if (!jump_follows) break;

      s.tau = s.q;
      TransmissionEvent ev;
      s = schedule(s, ev);
      res.events.push_back(std::move(ev));
      if (opt.record_jump_states) res.jump_states.push_back(s);
      if (s.t >= t_end) {
        // Jump landed on the horizon: record the post-jump endpoint.
        if (opt.record_trajectory && static_cast<double>(next_sample) * opt.output_step <= t_end) {
          Vec z(2 * n);
          z << s.x_p, s.x_o;
          emit_sample(static_cast<double>(next_sample++) * opt.output_step, z, model.controller(s.x_hat_o)[0]);
        }
        break;
      }
    }
  } catch (const IntegrationError& err) {
    res.status = RunStatus::integration_failure;
    res.diagnostic = err.what();
  }
  res.final_state = s;
  return res;
}

}  // namespace

RunResult simulate_run(const HybridState& initial, const StcEngine& engine, const LyapunovData& lyap,
                       const Model& model, const SimOptions& opt) {
  HybridState s0 = initial;
  if (s0.eta.eta.empty()) {
    const double v0 = observed_value(s0, engine, lyap);
    s0.eta = opt.eta_init == EtaInit::zeros
                 ? DynVar{std::vector<double>(static_cast<std::size_t>(engine.config().window - 1), 0.0)}
                 : engine.initial_eta(v0);
  } else if (s0.eta.eta.size() != static_cast<std::size_t>(engine.config().window - 1)) {
    throw std::invalid_argument("initial eta has the wrong length");
  }
  return run_loop(s0, lyap, model, opt, [&](const HybridState& s, TransmissionEvent& ev) {
    return jump(s, engine, lyap, &ev);
  });
}

RunResult periodic_run(const HybridState& initial, double period, const LyapunovData& lyap, const Model& model,
                       const SimOptions& opt) {
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
  HybridState s0 = initial;
  s0.eta = DynVar{};
  return run_loop(s0, lyap, model, opt, [&](const HybridState& s, TransmissionEvent& ev) {
    return apply_jump(s, lyap, ev, [period](const HybridState& st, TransmissionEvent& e) {
      e.interval = period;
      e.c = std::numeric_limits<double>::quiet_NaN();
      return st.eta;
    });
  });
}

FlowSegment sample_flow_segment(const HybridState& post_jump, const Model& model, std::size_t samples,
                                ErrorBookkeeping bookkeeping, const OdeOptions& ode) {
  if (samples < 2) throw std::invalid_argument("sample_flow_segment: need at least two samples");
  if (!(post_jump.q > 0.0)) throw std::invalid_argument("sample_flow_segment: interval must be positive");
  const Eigen::Index n = model.state_dim();
  FlowSegment seg;
  seg.interval = post_jump.q;
  seg.tau.reserve(samples);

  // State: x_p and e. Physical bookkeeping keeps x_hat_o fixed, so
  // e' = -x_p'; with reset bookkeeping e(0) = 0 and the controller sees x_p + e.
  Vec z(2 * n);
  const Vec e0 = bookkeeping == ErrorBookkeeping::physical ? post_jump.error() : Vec::Zero(n);
  z << post_jump.x_p, e0;
  auto rhs = [&](double, const Vec& zz) {
    const Vec xp = zz.head(n);
    const Vec u = model.controller(xp + zz.tail(n));
    const Vec f = model.plant_rhs(xp, u);
    Vec d(2 * n);
    d << f, -f;
    return d;
  };
  std::size_t k = 0;
  const double h = seg.interval / static_cast<double>(samples - 1);
  auto push = [&](double tau, const Vec& zz) {
    seg.tau.push_back(tau);
    seg.x_p.push_back(zz.head(n));
    seg.e.push_back(zz.tail(n));
  };
  push(0.0, z);
  k = 1;
  integrate_dense(rhs, z, 0.0, seg.interval, ode, [&](const DenseStep<Vec>& step) {
    while (k < samples) {
      const double tau = k + 1 == samples ? seg.interval : static_cast<double>(k) * h;
      if (tau > step.t1) break;
      push(tau, step(tau));
      ++k;
    }
    return true;
  });
  return seg;
}

}  // namespace hybridstc
