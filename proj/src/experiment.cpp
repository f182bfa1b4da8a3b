#include "hybridstc/experiment.hpp"

#include "hybridstc/io.hpp"
#include "hybridstc/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace hybridstc {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so that unknown
// keys can be rejected afterwards.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
  }

  void positive(const std::string& key, double& out) {
    number(key, out);
    if (obj_.contains(key) && !(out > 0.0)) throw ConfigError(at(key), "must be positive");
  }

  template <class Int>
  void integer(const std::string& key, Int& out, long long min_value) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      const auto x = v->get<long long>();
      if (x < min_value) throw ConfigError(at(key), "must be at least " + std::to_string(min_value));
      out = static_cast<Int>(x);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected a boolean");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out, bool require_positive) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->empty()) throw ConfigError(at(key), "expected a non-empty array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const auto& x = (*v)[i];
        const std::string p = at(key) + "/" + std::to_string(i);
        if (!x.is_number()) throw ConfigError(p, "expected a number");
        const double d = x.get<double>();
        if (!std::isfinite(d)) throw ConfigError(p, "must be finite");
        if (require_positive && !(d > 0.0)) throw ConfigError(p, "must be positive");
        out.push_back(d);
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_grid(const json& j, const std::string& path, CertGrid& grid) {
  ObjectReader r(j, path);
  std::vector<double> hw(grid.half_width.begin(), grid.half_width.end());
  r.numbers("half_width", hw, true);
  if (hw.size() != 4) throw ConfigError(r.at("half_width"), "expected 4 entries (x1, x2, e1, e2)");
  std::copy(hw.begin(), hw.end(), grid.half_width.begin());
  r.integer("samples", grid.samples, 2);
  r.finish();
}

Mat read_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string rp = path + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].size() != cols || cols == 0) throw ConfigError(rp, "ragged or empty row");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(rp + "/" + std::to_string(k), "expected a number");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  ObjectReader root(doc, "");

  if (const json* m = root.find("model")) {
    ObjectReader r(*m, "/model");
    r.string("name", cfg.model);
    if (cfg.model != "robot_arm") throw ConfigError("/model/name", "unknown model '" + cfg.model + "'");
    r.number("a", cfg.arm.a);
    r.number("b", cfg.arm.b);
    r.number("theta1", cfg.arm.theta1);
    r.number("theta2", cfg.arm.theta2);
    r.finish();
    if (cfg.arm.b == 0.0) throw ConfigError("/model/b", "must be nonzero");
  }

  if (const json* s = root.find("stc")) {
    ObjectReader r(*s, "/stc");
    r.positive("eps_ref", cfg.stc.eps_ref);
    r.number("delta", cfg.stc.delta);
    if (!(cfg.stc.delta > 0.0 && cfg.stc.delta < 1.0)) throw ConfigError("/stc/delta", "must lie in (0, 1)");
    r.positive("v_max", cfg.stc.v_max);
    r.integer("window", cfg.stc.window, 2);
    r.positive("v_floor", cfg.stc.v_floor);
    std::string mode{to_string(cfg.stc.mode)};
    r.string("mode", mode);
    try {
      cfg.stc.mode = feedback_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("/stc/mode", e.what());
    }
    std::string init = "observed_value";
    r.string("eta_init", init);
    if (init == "observed_value") cfg.eta_init = EtaInit::observed_value;
    else if (init == "zeros") cfg.eta_init = EtaInit::zeros;
    else throw ConfigError("/stc/eta_init", "expected 'observed_value' or 'zeros'");
    r.finish();
  }

  if (const json* l = root.find("lyapunov")) {
    ObjectReader r(*l, "/lyapunov");
    Mat mats[4];
    const char* keys[4] = {"P", "W_weight", "H_x", "H_e"};
    for (int k = 0; k < 4; ++k) {
      const json* v = r.find(keys[k]);
      if (!v) throw ConfigError(r.at(keys[k]), "required");
      mats[k] = read_matrix(*v, r.at(keys[k]));
    }
    r.finish();
    try {
      cfg.lyapunov = LyapunovData(mats[0], mats[1], mats[2], mats[3]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("/lyapunov", e.what());
    }
  }

  if (const json* p = root.find("parameter_sets")) {
    ObjectReader r(*p, "/parameter_sets");
    std::string source = "sweep";
    r.string("source", source);
    if (source == "sweep") cfg.set_source = SetSource::sweep;
    else if (source == "inline") cfg.set_source = SetSource::inline_sets;
    else if (source == "file") cfg.set_source = SetSource::file;
    else throw ConfigError("/parameter_sets/source", "expected 'sweep', 'inline' or 'file'");
    if (const json* sets = r.find("sets")) {
      if (!sets->is_array()) throw ConfigError(r.at("sets"), "expected an array");
      for (std::size_t i = 0; i < sets->size(); ++i) {
        const std::string path = r.at("sets") + "/" + std::to_string(i);
        ObjectReader sr((*sets)[i], path);
        ParameterSet ps;
        sr.number("epsilon", ps.epsilon);
        sr.positive("gamma", ps.gamma);
        sr.positive("L", ps.L);
        sr.finish();
        if (!(*sets)[i].contains("gamma") || !(*sets)[i].contains("L") || !(*sets)[i].contains("epsilon"))
          throw ConfigError(path, "epsilon, gamma and L are required");
        cfg.inline_sets.push_back(ps);
      }
    }
    r.string("path", cfg.sets_path);
    r.string("cache", cfg.cache_path);
    r.numbers("eps_grid", cfg.eps_grid, false);
    if (const json* g = r.find("grid")) read_grid(*g, r.at("grid"), cfg.sweep_grid);
    r.boolean("refine", cfg.refine);
    r.finish();
    if (cfg.set_source == SetSource::inline_sets && cfg.inline_sets.empty())
      throw ConfigError("/parameter_sets/sets", "inline source needs at least one set");
    if (cfg.set_source == SetSource::file && cfg.sets_path.empty())
      throw ConfigError("/parameter_sets/path", "file source needs a path");
  }

  if (const json* c = root.find("certify")) {
    ObjectReader r(*c, "/certify");
    if (const json* g = r.find("grid")) read_grid(*g, r.at("grid"), cfg.check_grid);
    r.finish();
  }

  if (const json* e = root.find("experiment")) {
    ObjectReader r(*e, "/experiment");
    r.integer("runs", cfg.runs, 1);
    r.numbers("horizons", cfg.horizons, true);
    r.integer("seed", cfg.seed, 0);
    r.positive("ic_half_width", cfg.ic_half_width);
    r.integer("workers", cfg.workers, 1);
    r.integer("write_runs", cfg.write_runs, 0);
    r.positive("convergence_threshold", cfg.convergence_threshold);
    r.finish();
  }

  if (const json* s = root.find("simulate")) {
    ObjectReader r(*s, "/simulate");
    if (r.find("initial")) {
      std::vector<double> ic;
      r.numbers("initial", ic, false);
      if (ic.size() != 4) throw ConfigError(r.at("initial"), "expected 4 entries (x_p1, x_p2, x_o1, x_o2)");
      cfg.initial = std::array<double, 4>{ic[0], ic[1], ic[2], ic[3]};
    }
    r.positive("horizon", cfg.sim_horizon);
    r.positive("output_step", cfg.output_step);
    r.number("period", cfg.period);
    if (cfg.period < 0.0) throw ConfigError(r.at("period"), "must be nonnegative (0 selects t_min)");
    r.finish();
  }

  if (const json* t = root.find("tmax_table")) {
    ObjectReader r(*t, "/tmax_table");
    r.numbers("gamma", cfg.table_gamma, true);
    r.numbers("ell", cfg.table_ell, true);
    r.finish();
  }

  root.finish();
  cfg.hash = fnv1a_hex(doc.dump());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

Experiment resolve(const ExperimentConfig& cfg) {
  Experiment exp;
  exp.cfg = cfg;
  exp.model = std::make_shared<robot_arm::RobotArmModel>(cfg.arm);
  exp.lyap = cfg.lyapunov ? *cfg.lyapunov : robot_arm::default_lyapunov(cfg.arm);

  StcConfig stc = cfg.stc;
  switch (cfg.set_source) {
    case SetSource::inline_sets:
      stc.sets = cfg.inline_sets;
      break;
    case SetSource::file: {
      std::ifstream in(cfg.sets_path);
      if (!in) throw ConfigError("/parameter_sets/path", "cannot read " + cfg.sets_path);
      stc.sets = parameter_cache_from_json(json::parse(in)).sets;
      break;
    }
    case SetSource::sweep: {
      const auto loop = robot_arm_closed_loop(cfg.arm);
      const std::string key = sweep_input_hash(exp.lyap, cfg.sweep_grid, cfg.eps_grid, cfg.arm, cfg.stc.delta);
      if (!cfg.cache_path.empty() && std::filesystem::exists(cfg.cache_path)) {
        try {
          std::ifstream in(cfg.cache_path);
          const auto cache = parameter_cache_from_json(json::parse(in));
          if (cache.grid_hash == key) {
            stc.sets = cache.sets;
            exp.cache_hit = true;
          }
        } catch (const std::exception&) {
          // Stale or corrupt cache: recompute below.
        }
      }
      if (!exp.cache_hit) {
        SweepOptions so;
        so.delta = cfg.stc.delta;
        so.refine = cfg.refine;
        auto res = sweep_parameter_sets(exp.lyap, loop, cfg.eps_grid, cfg.sweep_grid, so);
        stc.sets = std::move(res.sets);
        exp.sweep_notes = std::move(res.skipped);
        if (!cfg.cache_path.empty()) {
          std::ofstream out(cfg.cache_path);
          out << parameter_cache_to_json(stc.sets, cfg.stc.delta, cfg.sweep_grid, exp.lyap, key).dump(2) << '\n';
        }
      }
      break;
    }
  }
  try {
    exp.engine = std::make_unique<StcEngine>(std::move(stc));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/parameter_sets", e.what());
  }
  return exp;
}

std::array<double, 4> sample_initial_condition(std::uint64_t seed, std::uint64_t index, double half_width) {
  CounterRng rng(seed, index);
  std::array<double, 4> ic{};
  for (auto& v : ic) v = rng.uniform(-half_width, half_width);
  return ic;
}

HybridState initial_state(const std::array<double, 4>& ic) {
  Vec xp(2), xo(2);
  xp << ic[0], ic[1];
  xo << ic[2], ic[3];
  return make_initial_state(xp, xo);
}

RunStats monte_carlo(const Experiment& exp, const MonteCarloOptions& opt) {
  const auto& cfg = exp.cfg;
  const std::size_t runs = static_cast<std::size_t>(cfg.runs);
  const double horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());

  RunStats st;
  st.seed = cfg.seed;
  st.runs = runs;
  st.t_min = exp.engine->t_min();
  st.periodic_period = st.t_min;
  st.min_intervals.assign(runs, 0.0);
  st.final_plant_norm.assign(runs, 0.0);
  st.final_observer_error.assign(runs, 0.0);
  st.initial_observer_error.assign(runs, 0.0);
  st.diagnostics.assign(runs, "");
  std::vector<std::vector<std::size_t>> counts(runs);
  std::vector<std::vector<char>> converged(runs);

  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < runs; r = next++) {
      const auto ic = sample_initial_condition(cfg.seed, r, cfg.ic_half_width);
      const auto s0 = initial_state(ic);
      SimOptions so;
      so.horizon = horizon;
      so.eta_init = cfg.eta_init;
      so.output_step = cfg.output_step;
      so.record_trajectory = static_cast<int>(r) < cfg.write_runs;
      const auto res = simulate_run(s0, *exp.engine, exp.lyap, *exp.model, so);
      for (double h : cfg.horizons) counts[r].push_back(res.transmissions(h));
      // Convergence per horizon needs |x_p(h)|: recorded trajectories give it
      // directly, otherwise it is read from the event log or the final state.
      for (double h : cfg.horizons) {
        double norm = res.final_state.x_p.norm();
        if (h < horizon) {
          norm = std::numeric_limits<double>::infinity();
          for (const auto& ev : res.events)
            if (ev.t <= h * (1.0 + 1e-12)) norm = ev.norm_xp;
        }
        converged[r].push_back(norm <= cfg.convergence_threshold ? 1 : 0);
      }
      st.min_intervals[r] = res.min_interval();
      st.final_plant_norm[r] = res.final_state.x_p.norm();
      st.final_observer_error[r] = res.final_state.observer_error().norm();
      st.initial_observer_error[r] = s0.observer_error().norm();
      if (res.status != RunStatus::ok) st.diagnostics[r] = res.diagnostic.empty() ? "failed" : res.diagnostic;
      if (so.record_trajectory && opt.on_recorded_run) {
        std::lock_guard lock(callback_mutex);
        opt.on_recorded_run(r, ic, res);
      }
    }
  };
  const int nworkers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(runs)));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  st.divergences = static_cast<std::size_t>(
      std::count_if(st.diagnostics.begin(), st.diagnostics.end(), [](const std::string& d) { return !d.empty(); }));
  st.failed = static_cast<double>(st.divergences) > 0.01 * static_cast<double>(runs);

  // The periodic count does not depend on the initial condition.
  SimOptions po;
  po.horizon = horizon;
  po.record_trajectory = false;
  const auto periodic = periodic_run(initial_state(sample_initial_condition(cfg.seed, 0, cfg.ic_half_width)),
                                     st.periodic_period, exp.lyap, *exp.model, po);

  for (std::size_t k = 0; k < cfg.horizons.size(); ++k) {
    HorizonStats hs;
    hs.horizon = cfg.horizons[k];
    for (std::size_t r = 0; r < runs; ++r) {
      hs.counts.push_back(counts[r][k]);
      hs.converged += converged[r][k] ? 1 : 0;
    }
    std::vector<std::size_t> sorted = hs.counts;
    std::sort(sorted.begin(), sorted.end());
    hs.min = sorted.front();
    hs.max = sorted.back();
    hs.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(runs);
    const std::size_t mid = runs / 2;
    hs.median = runs % 2 ? static_cast<double>(sorted[mid]) : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
    hs.periodic_count = periodic.transmissions(hs.horizon);
    hs.reduction_ratio = hs.periodic_count ? hs.mean / static_cast<double>(hs.periodic_count)
                                           : std::numeric_limits<double>::infinity();
    st.horizons.push_back(std::move(hs));
  }
  return st;
}

nlohmann::json to_json(const RunStats& s) {
  json hs = json::array();
  for (const auto& h : s.horizons)
    hs.push_back({{"horizon", h.horizon},
                  {"mean", h.mean},
                  {"median", h.median},
                  {"min", h.min},
                  {"max", h.max},
                  {"periodic_count", h.periodic_count},
                  {"reduction_ratio", h.reduction_ratio},
                  {"converged", h.converged},
                  {"counts", h.counts}});
  return {{"seed", s.seed},
          {"runs", s.runs},
          {"t_min", s.t_min},
          {"periodic_period", s.periodic_period},
          {"horizons", hs},
          {"min_interval", s.min_intervals.empty() ? 0.0 : *std::min_element(s.min_intervals.begin(), s.min_intervals.end())},
          {"divergences", s.divergences},
          {"failed", s.failed},
          {"reference",
           {{"note", "reference values for the original parameter sets"},
            {"t_min", 0.175},
            {"stc_mean_10s", 29.8},
            {"periodic_10s", 56},
            {"stc_mean_50s", 92.4},
            {"periodic_50s", 282}}}};
}

void write_events_csv(std::ostream& os, const std::vector<TransmissionEvent>& events, const std::string& config_hash,
                      std::uint64_t seed) {
  write_provenance(os, config_hash, seed);
  os << "j,t,interval,set_index,fallback,V_obs,C,norm_xp,norm_eo\n";
  for (const auto& e : events) {
    os << e.j << ',' << format_double(e.t) << ',' << format_double(e.interval) << ',' << (e.set_index + 1) << ','
       << (e.fallback ? 1 : 0) << ',' << format_double(e.v_obs) << ',' << format_double(e.c) << ','
       << format_double(e.norm_xp) << ',' << format_double(e.norm_eo) << '\n';
  }
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& traj, const std::string& config_hash,
                          std::uint64_t seed) {
  write_provenance(os, config_hash, seed);
  os << "t,xp1,xp2,xo1,xo2,u_hat,V_obs,V_plant\n";
  for (const auto& s : traj) {
    os << format_double(s.t) << ',' << format_double(s.x_p[0]) << ',' << format_double(s.x_p[1]) << ','
       << format_double(s.x_o[0]) << ',' << format_double(s.x_o[1]) << ',' << format_double(s.u_hat) << ','
       << format_double(s.v_obs) << ',' << format_double(s.v_plant) << '\n';
  }
}

void write_tmax_table_csv(std::ostream& os, const std::vector<double>& gammas, const std::vector<double>& ells,
                          const std::string& config_hash, std::uint64_t seed) {
  write_provenance(os, config_hash, seed);
  os << "gamma,ell,t_max\n";
  for (double g : gammas)
    for (double l : ells) os << format_double(g) << ',' << format_double(l) << ',' << format_double(t_max(g, l)) << '\n';
}

}  // namespace hybridstc
