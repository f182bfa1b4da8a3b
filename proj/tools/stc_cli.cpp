// stc: command-line front end for simulations, certification, the parameter
// sweep, the Monte Carlo benchmark and the T_max table.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
// failure (divergence, integration failure or a failed certificate).

#include "hybridstc/experiment.hpp"
#include "hybridstc/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hybridstc;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<double> horizon;
  std::optional<int> workers;
};

class NumericalFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Command-line overrides are folded into the document before validation so
// that the config hash covers them.
ExperimentConfig load(const Common& c, bool horizon_is_sim) {
  json doc = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("/", "cannot read config file " + c.config);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("/", "expected an object");
  }
  if (c.seed) doc["experiment"]["seed"] = *c.seed;
  if (c.runs) doc["experiment"]["runs"] = *c.runs;
  if (c.workers) doc["experiment"]["workers"] = *c.workers;
  if (c.horizon) {
    if (horizon_is_sim)
      doc["simulate"]["horizon"] = *c.horizon;
    else
      doc["experiment"]["horizons"] = json::array({*c.horizon});
  }
  return parse_config(doc);
}

fs::path output_dir(const Common& c) {
  fs::path dir = "results";
  if (const char* env = std::getenv("STC_OUTPUT_DIR"); env && *env) dir = env;
  if (!c.out.empty()) dir = c.out;
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

json header(const ExperimentConfig& cfg) {
  return {{"version", std::string(kVersion)}, {"config_hash", cfg.hash}, {"seed", cfg.seed}};
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

std::array<double, 4> single_ic(const ExperimentConfig& cfg) {
  return cfg.initial ? *cfg.initial : sample_initial_condition(cfg.seed, 0, cfg.ic_half_width);
}

json run_summary(const RunResult& r, const std::array<double, 4>& ic) {
  return {{"status", r.status == RunStatus::ok ? "ok" : r.diagnostic},
          {"initial", ic},
          {"transmissions", r.transmissions(std::numeric_limits<double>::infinity())},
          {"min_interval", r.min_interval()},
          {"final_plant_norm", r.final_state.x_p.norm()},
          {"final_observer_error", r.final_state.observer_error().norm()}};
}

void write_run_files(const fs::path& dir, std::size_t index, const RunResult& r, const ExperimentConfig& cfg) {
  auto ev = open_out(dir / ("events_" + std::to_string(index) + ".csv"));
  write_events_csv(ev, r.events, cfg.hash, cfg.seed);
  auto tr = open_out(dir / ("trajectory_" + std::to_string(index) + ".csv"));
  write_trajectory_csv(tr, r.trajectory, cfg.hash, cfg.seed);
}

int cmd_simulate(const Common& c, bool periodic) {
  const auto cfg = load(c, true);
  const auto exp = resolve(cfg);
  const auto dir = output_dir(c);
  const auto ic = single_ic(cfg);
  SimOptions so;
  so.horizon = cfg.sim_horizon;
  so.output_step = cfg.output_step;
  so.eta_init = cfg.eta_init;
  const double period = cfg.period > 0.0 ? cfg.period : exp.engine->t_min();
  const auto res = periodic ? periodic_run(initial_state(ic), period, exp.lyap, *exp.model, so)
                            : simulate_run(initial_state(ic), *exp.engine, exp.lyap, *exp.model, so);
  write_run_files(dir, 0, res, cfg);
  json summary = header(cfg);
  summary["mode"] = periodic ? "periodic" : "stc";
  summary["t_min"] = exp.engine->t_min();
  if (periodic) summary["period"] = period;
  summary["horizon"] = cfg.sim_horizon;
  summary["run"] = run_summary(res, ic);
  write_json(dir / "summary.json", summary);
  std::cout << (periodic ? "periodic" : "stc") << ": " << res.transmissions(cfg.sim_horizon)
            << " transmissions in (0, " << cfg.sim_horizon << "], t_min = " << exp.engine->t_min() << " s\n";
  if (res.status != RunStatus::ok) throw NumericalFailure(res.diagnostic);
  return 0;
}

json sets_report(const StcEngine& engine) {
  json arr = json::array();
  for (std::size_t i = 0; i < engine.sets().size(); ++i) {
    const auto& s = engine.sets()[i];
    arr.push_back({{"index", i + 1}, {"epsilon", s.epsilon}, {"gamma", s.gamma}, {"L", s.L},
                   {"interval", engine.set_interval(i)}});
  }
  return arr;
}

int cmd_sweep(const Common& c) {
  const auto cfg = load(c, false);
  const auto dir = output_dir(c);
  const auto lyap = cfg.lyapunov ? *cfg.lyapunov : robot_arm::default_lyapunov(cfg.arm);
  SweepOptions so;
  so.delta = cfg.stc.delta;
  so.refine = cfg.refine;
  const auto res = sweep_parameter_sets(lyap, robot_arm_closed_loop(cfg.arm), cfg.eps_grid, cfg.sweep_grid, so);
  const std::string key = sweep_input_hash(lyap, cfg.sweep_grid, cfg.eps_grid, cfg.arm, cfg.stc.delta);
  json doc = parameter_cache_to_json(res.sets, cfg.stc.delta, cfg.sweep_grid, lyap, key);
  json skipped = json::array();
  for (const auto& [eps, why] : res.skipped) skipped.push_back({{"epsilon", eps}, {"reason", why}});
  doc["skipped"] = skipped;
  doc["config_hash"] = cfg.hash;
  doc["seed"] = cfg.seed;
  write_json(dir / "parameter_sets.json", doc);
  std::cout << res.sets.size() << " parameter sets certified, " << res.skipped.size() << " skipped\n";
  if (res.sets.empty()) throw NumericalFailure("no parameter set could be certified");
  return 0;
}

int cmd_certify(const Common& c) {
  const auto cfg = load(c, false);
  const auto exp = resolve(cfg);
  const auto dir = output_dir(c);
  const auto loop = robot_arm_closed_loop(cfg.arm);
  json doc = header(cfg);
  doc["grid"] = cfg.check_grid.to_json();
  json sets = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < exp.engine->sets().size(); ++i) {
    const auto& s = exp.engine->sets()[i];
    const auto m = check_assumption1(s, exp.lyap, loop, cfg.check_grid);
    all_pass = all_pass && m.pass;
    auto witness = [](const Vec4& w) { return std::vector<double>(w.data(), w.data() + 4); };
    sets.push_back({{"index", i + 1},
                    {"epsilon", s.epsilon},
                    {"gamma", s.gamma},
                    {"L", s.L},
                    {"flow_margin", m.flow_margin},
                    {"decay_margin", m.decay_margin},
                    {"flow_witness", witness(m.flow_witness)},
                    {"decay_witness", witness(m.decay_witness)},
                    {"pass", m.pass}});
  }
  doc["sets"] = sets;
  const auto obs = certify_observer(cfg.arm);
  const robot_arm::Mat2& P = obs.P_o;
  doc["observer"] = {{"theta1_positive", obs.theta1_positive},
                     {"theta2_dominates", obs.theta2_dominates},
                     {"quadratic_certificate", obs.quadratic_certificate},
                     {"P_o", {{P(0, 0), P(0, 1)}, {P(1, 0), P(1, 1)}}},
                     {"worst_eigenvalue", obs.worst_eigenvalue},
                     {"pass", obs.pass()}};
  doc["pass"] = all_pass && obs.pass();
  write_json(dir / "certify.json", doc);
  std::cout << "certification " << (doc["pass"].get<bool>() ? "passed" : "FAILED") << " for "
            << exp.engine->sets().size() << " sets; observer " << (obs.pass() ? "ok" : "FAILED") << '\n';
  if (!doc["pass"].get<bool>()) throw NumericalFailure("certification failed");
  return 0;
}

int cmd_bench(const Common& c) {
  const auto cfg = load(c, false);
  const auto exp = resolve(cfg);
  const auto dir = output_dir(c);
  MonteCarloOptions opt;
  opt.on_recorded_run = [&](std::size_t r, const std::array<double, 4>&, const RunResult& res) {
    write_run_files(dir, r, res, cfg);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = monte_carlo(exp, opt);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json doc = header(cfg);
  doc.update(to_json(stats));
  doc["sets"] = sets_report(*exp.engine);
  doc["cache_hit"] = exp.cache_hit;
  json diags = json::array();
  for (std::size_t r = 0; r < stats.diagnostics.size(); ++r)
    if (!stats.diagnostics[r].empty()) diags.push_back({{"run", r}, {"diagnostic", stats.diagnostics[r]}});
  doc["diagnostics"] = diags;
  write_json(dir / "stats.json", doc);

  for (const auto& h : stats.horizons)
    std::cout << "horizon " << h.horizon << " s: mean " << h.mean << " (min " << h.min << ", max " << h.max
              << "), periodic " << h.periodic_count << ", ratio " << h.reduction_ratio << ", converged "
              << h.converged << "/" << stats.runs << '\n';
  std::cout << "t_min " << stats.t_min << " s, " << stats.divergences << " divergences, " << wall << " s wall\n";
  if (stats.failed) throw NumericalFailure("more than 1% of runs diverged");
  return 0;
}

int cmd_tmax_table(const Common& c) {
  const auto cfg = load(c, false);
  const auto dir = output_dir(c);
  auto os = open_out(dir / "tmax_table.csv");
  write_tmax_table_csv(os, cfg.table_gamma, cfg.table_ell, cfg.hash, cfg.seed);
  std::cout << "wrote " << (dir / "tmax_table.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic self-triggered output-feedback control: simulation and benchmark tool"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "JSON config file (defaults apply when omitted)");
    sub->add_option("-o,--out", common.out, "Output directory (default: $STC_OUTPUT_DIR or ./results)");
    sub->add_option("--seed", common.seed, "Override experiment.seed");
    sub->add_option("--runs", common.runs, "Override experiment.runs")->check(CLI::PositiveNumber);
    sub->add_option("--horizon", common.horizon, "Override the horizon in seconds")->check(CLI::PositiveNumber);
    sub->add_option("--workers", common.workers, "Override experiment.workers")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "Single self-triggered run");
  auto* periodic = app.add_subcommand("periodic", "Single periodic run at simulate.period (default t_min)");
  auto* certify = app.add_subcommand("certify", "Grid-check the parameter sets and the observer gains");
  auto* sweep = app.add_subcommand("sweep", "Derive parameter sets over the epsilon grid");
  auto* bench = app.add_subcommand("bench", "Monte Carlo transmission benchmark");
  auto* table = app.add_subcommand("tmax-table", "Tabulate T_max over the configured gamma/ell grid");
  for (auto* sub : {simulate, periodic, certify, sweep, bench, table}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(common, false);
    if (*periodic) return cmd_simulate(common, true);
    if (*certify) return cmd_certify(common);
    if (*sweep) return cmd_sweep(common);
    if (*bench) return cmd_bench(common);
    if (*table) return cmd_tmax_table(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
