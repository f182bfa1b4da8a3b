#include "hybridstc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hybridstc {

std::string_view to_string(FeedbackMode mode) {
  return mode == FeedbackMode::output ? "output_feedback" : "state_feedback";
}

FeedbackMode feedback_mode_from_string(std::string_view name) {
  if (name == "output_feedback") return FeedbackMode::output;
  if (name == "state_feedback") return FeedbackMode::state;
  throw std::invalid_argument("unknown feedback mode '" + std::string(name) + "'");
}

std::string_view to_string(FallbackReason reason) {
  switch (reason) {
    case FallbackReason::none: return "none";
    case FallbackReason::gate: return "gate";
    case FallbackReason::no_candidate: return "no_candidate";
  }
  return "none";
}

double c_value(double v_obs, const DynVar& eta, int window) {
  return (v_obs + std::accumulate(eta.eta.begin(), eta.eta.end(), 0.0)) / window;
}

StcEngine::StcEngine(StcConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.delta > 0.0 && cfg_.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(cfg_.v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
  if (cfg_.window < 2) throw std::invalid_argument("window m must be at least 2");
  if (!(cfg_.eps_ref > 0.0)) throw std::invalid_argument("eps_ref must be positive");
  if (!(cfg_.v_floor > 0.0)) throw std::invalid_argument("v_floor must be positive");
  if (cfg_.sets.empty()) throw std::invalid_argument("at least one parameter set is required");
  for (const auto& s : cfg_.sets) validate(s);

  const double delta = cfg_.delta;
  std::stable_sort(cfg_.sets.begin(), cfg_.sets.end(), [delta](const ParameterSet& a, const ParameterSet& b) {
    if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
    return scaled_interval(a, delta) > scaled_interval(b, delta);
  });

  const auto& first = cfg_.sets.front();
  if (first.epsilon < cfg_.eps_ref)
    throw std::invalid_argument("the set with the largest epsilon must satisfy epsilon >= eps_ref");
  if (first.L + first.epsilon / 2.0 < 1.0 - delta)
    throw std::invalid_argument("set 1 must satisfy L + epsilon/2 >= 1 - delta");

  intervals_.reserve(cfg_.sets.size());
  for (const auto& s : cfg_.sets) intervals_.push_back(scaled_interval(s, delta));
  if (!(intervals_.front() > 0.0)) throw std::invalid_argument("t_min must be positive");
}

double StcEngine::max_interval() const {
  return *std::max_element(intervals_.begin(), intervals_.end());
}

DynVar StcEngine::initial_eta(double v0) const {
  const double v = cfg_.mode == FeedbackMode::output ? std::min(v0, cfg_.v_max) : v0;
  return DynVar{std::vector<double>(static_cast<std::size_t>(cfg_.window - 1), v)};
}

DynVar StcEngine::eta_update(const DynVar& eta, double v_obs, double interval) const {
  const double discount = std::exp(-cfg_.eps_ref * interval);
  const double newest = cfg_.mode == FeedbackMode::output ? std::min(v_obs, cfg_.v_max) : v_obs;
  DynVar out;
  out.eta.reserve(eta.eta.size());
  for (std::size_t k = 1; k < eta.eta.size(); ++k) out.eta.push_back(discount * eta.eta[k]);
  out.eta.push_back(discount * newest);
  return out;
}

std::optional<double> StcEngine::candidate_interval(std::size_t i, double c_val, double v_obs) const {
  const auto& s = cfg_.sets.at(i);
  const double T = intervals_[i];
  if (v_obs <= cfg_.v_floor) return T;
  const double eps_ref = cfg_.eps_ref;
  if (s.epsilon < eps_ref) {
    if (c_val < v_obs) return std::nullopt;
    const double h = (std::log(c_val) - std::log(v_obs)) / (eps_ref - s.epsilon);
    const double cand = std::min(T, h);
    if (!(cand > 0.0)) return std::nullopt;
    return cand;
  }
  if (c_val >= v_obs) return T;
  if (s.epsilon == eps_ref) return std::nullopt;
  const double needed = std::log(v_obs / c_val) / (s.epsilon - eps_ref);
  if (T >= needed) return T;
  return std::nullopt;
}

IntervalChoice StcEngine::next_interval(double v_obs, const DynVar& eta) const {
  IntervalChoice out;
  out.c_value = c_value(v_obs, eta, cfg_.window);
  const bool gate_closed = out.c_value > cfg_.v_max;
  const double tmin = t_min();

  double best = tmin;
  std::size_t best_index = 0;
  bool improved = false;
  bool gated_any = false;
  for (std::size_t i = 0; i < cfg_.sets.size(); ++i) {
    const auto cand = candidate_interval(i, out.c_value, v_obs);
    if (!cand) continue;
    if (gate_closed && *cand > tmin) {
      gated_any = true;
      continue;
    }
    if (*cand > best) {
      best = *cand;
      best_index = i;
      improved = true;
    }
  }
  out.interval = best;
  out.set_index = improved ? best_index : 0;
  out.fallback = !improved;
  if (out.fallback) out.reason = gated_any || gate_closed ? FallbackReason::gate : FallbackReason::no_candidate;
  return out;
}

}  // namespace hybridstc
