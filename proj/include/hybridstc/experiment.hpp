#pragma once

// Experiment configuration (strict JSON schema), resolution of parameter
// sets, the Monte Carlo transmission benchmark and the CSV/JSON writers.

#include "hybridstc/certify.hpp"
#include "hybridstc/engine.hpp"
#include "hybridstc/hybrid_sim.hpp"
#include "hybridstc/robot_arm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybridstc {

/// Schema violation; `path` is a JSON pointer to the offending location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class SetSource { sweep, inline_sets, file };

struct ExperimentConfig {
  std::string model = "robot_arm";
  robot_arm::Params arm{};
  StcConfig stc{};  // sets are filled in by resolve()
  EtaInit eta_init = EtaInit::observed_value;
  std::optional<LyapunovData> lyapunov;  // default: robot_arm::default_lyapunov

  SetSource set_source = SetSource::sweep;
  std::vector<ParameterSet> inline_sets;
  std::string sets_path;
  std::string cache_path;
  std::vector<double> eps_grid = default_eps_grid();
  CertGrid sweep_grid = [] {
    CertGrid g;
    g.samples = 16;
    return g;
  }();
  bool refine = true;

  CertGrid check_grid{};  // used by `certify`

  int runs = 1000;
  std::vector<double> horizons{10.0, 50.0};
  std::uint64_t seed = 1;
  double ic_half_width = 10.0;
  int workers = 1;
  int write_runs = 0;
  double convergence_threshold = 1e-3;

  std::optional<std::array<double, 4>> initial;  // (x_p1, x_p2, x_o1, x_o2)
  double sim_horizon = 10.0;
  double output_step = 1e-3;
  double period = 0.0;  // 0 selects t_min

  std::vector<double> table_gamma{0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<double> table_ell{0.5, 1.0, 2.0, 5.0};

  std::string hash;  // of the canonical config JSON
};

/// Parses and validates a config document. Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Everything needed to run simulations for a config.
struct Experiment {
  ExperimentConfig cfg;
  std::shared_ptr<const Model> model;
  LyapunovData lyap;
  std::unique_ptr<StcEngine> engine;
  std::vector<std::pair<double, std::string>> sweep_notes;
  bool cache_hit = false;
};

/// Builds the model, Lyapunov data and parameter sets (sweeping, reading the
/// cache or the configured file) and validates the engine configuration.
Experiment resolve(const ExperimentConfig& cfg);

/// Initial condition for run `index`: uniform in [-w, w]^4 from
/// CounterRng(seed, index).
std::array<double, 4> sample_initial_condition(std::uint64_t seed, std::uint64_t index, double half_width);

HybridState initial_state(const std::array<double, 4>& ic);

struct HorizonStats {
  double horizon = 0.0;
  std::vector<std::size_t> counts;  // per run, jumps with t_j in (0, horizon]
  double mean = 0.0;
  double median = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
  std::size_t periodic_count = 0;
  double reduction_ratio = 0.0;  // mean / periodic_count
  std::size_t converged = 0;     // runs with |x_p(horizon)| below the threshold
};

struct RunStats {
  std::uint64_t seed = 0;
  std::size_t runs = 0;
  double t_min = 0.0;
  double periodic_period = 0.0;
  std::vector<HorizonStats> horizons;
  std::vector<double> min_intervals;     // per run
  std::vector<double> final_plant_norm;  // |x_p| at the largest horizon
  std::vector<double> final_observer_error;
  std::vector<double> initial_observer_error;
  std::vector<std::string> diagnostics;  // per run, empty when ok
  std::size_t divergences = 0;
  bool failed = false;  // more than 1% of runs diverged
};

struct MonteCarloOptions {
  /// Called for run indices < write_runs with the full result (trajectory
  /// recorded); may be empty.
  std::function<void(std::size_t, const std::array<double, 4>&, const RunResult&)> on_recorded_run;
};

RunStats monte_carlo(const Experiment& exp, const MonteCarloOptions& opt = {});

nlohmann::json to_json(const RunStats& stats);

void write_events_csv(std::ostream& os, const std::vector<TransmissionEvent>& events, const std::string& config_hash,
                      std::uint64_t seed);
void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& traj, const std::string& config_hash,
                          std::uint64_t seed);
void write_tmax_table_csv(std::ostream& os, const std::vector<double>& gammas, const std::vector<double>& ells,
                          const std::string& config_hash, std::uint64_t seed);

}  // namespace hybridstc
