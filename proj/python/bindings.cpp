#include "hybridstc/certify.hpp"
#include "hybridstc/experiment.hpp"
#include "hybridstc/io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace hybridstc;

namespace {

// JSON crosses the boundary as text; the Python side wraps json.loads/dumps.
ExperimentConfig config_from(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

py::dict event_dict(const TransmissionEvent& e) {
  py::dict d;
  d["j"] = e.j;
  d["t"] = e.t;
  d["interval"] = e.interval;
  d["set_index"] = e.set_index;
  d["fallback"] = e.fallback;
  d["reason"] = std::string(to_string(e.reason));
  d["v_obs"] = e.v_obs;
  d["c"] = e.c;
  d["norm_xp"] = e.norm_xp;
  d["norm_eo"] = e.norm_eo;
  d["eta"] = e.eta_before;
  return d;
}

py::dict run_dict(const RunResult& r) {
  py::dict d;
  d["status"] = r.status == RunStatus::ok ? "ok" : (r.status == RunStatus::diverged ? "diverged" : "integration_failure");
  d["diagnostic"] = r.diagnostic;
  py::list events;
  for (const auto& e : r.events) events.append(event_dict(e));
  d["events"] = events;
  std::vector<double> t, u, vo, vp;
  std::vector<std::array<double, 4>> x;
  for (const auto& s : r.trajectory) {
    t.push_back(s.t);
    x.push_back({s.x_p[0], s.x_p[1], s.x_o[0], s.x_o[1]});
    u.push_back(s.u_hat);
    vo.push_back(s.v_obs);
    vp.push_back(s.v_plant);
  }
  d["t"] = t;
  d["x"] = x;
  d["u_hat"] = u;
  d["v_obs"] = vo;
  d["v_plant"] = vp;
  d["min_interval"] = r.min_interval();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dynamic self-triggered output-feedback control: core routines";
  m.attr("__version__") = std::string(kVersion);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<ParameterSet>(m, "ParameterSet")
      .def(py::init([](double epsilon, double gamma, double L) { return ParameterSet{epsilon, gamma, L}; }),
           py::arg("epsilon"), py::arg("gamma"), py::arg("L"))
      .def_readwrite("epsilon", &ParameterSet::epsilon)
      .def_readwrite("gamma", &ParameterSet::gamma)
      .def_readwrite("L", &ParameterSet::L)
      .def("__repr__", [](const ParameterSet& s) {
        return "ParameterSet(epsilon=" + format_double(s.epsilon) + ", gamma=" + format_double(s.gamma) +
               ", L=" + format_double(s.L) + ")";
      });

  m.def("t_max", &t_max, py::arg("gamma"), py::arg("ell"));
  m.def("effective_rate", &effective_rate, py::arg("set"), py::arg("delta"));
  m.def("scaled_interval", &scaled_interval, py::arg("set"), py::arg("delta"));
  m.def(
      "phi_solve",
      [](double gamma, double ell, double lambda, double horizon, bool stop_at_zero) {
        PhiSolveOptions opt;
        opt.stop_at_zero = stop_at_zero;
        const auto c = phi_solve({gamma, ell, lambda}, horizon, opt);
        return py::make_tuple(c.tau(), c.values(), c.first_zero());
      },
      py::arg("gamma"), py::arg("ell"), py::arg("lambda_"), py::arg("horizon"), py::arg("stop_at_zero") = false,
      "Returns (tau, phi, first_zero) from the adaptive solve.");
  m.def("u_value", &u_value, py::arg("V"), py::arg("gamma"), py::arg("phi"), py::arg("W"));

  py::class_<StcEngine>(m, "StcEngine")
      .def(py::init([](std::vector<ParameterSet> sets, double eps_ref, double delta, double v_max, int window,
                       double v_floor, const std::string& mode) {
             StcConfig cfg;
             cfg.sets = std::move(sets);
             cfg.eps_ref = eps_ref;
             cfg.delta = delta;
             cfg.v_max = v_max;
             cfg.window = window;
             cfg.v_floor = v_floor;
             cfg.mode = feedback_mode_from_string(mode);
             return StcEngine(std::move(cfg));
           }),
           py::arg("sets"), py::arg("eps_ref") = 0.01, py::arg("delta") = 0.999, py::arg("v_max") = 1e6,
           py::arg("window") = 16, py::arg("v_floor") = 1e-12, py::arg("mode") = "output_feedback")
      .def_property_readonly("sets", &StcEngine::sets)
      .def_property_readonly("t_min", &StcEngine::t_min)
      .def_property_readonly("max_interval", &StcEngine::max_interval)
      .def("set_interval", &StcEngine::set_interval, py::arg("index"))
      .def(
          "eta_update",
          [](const StcEngine& e, std::vector<double> eta, double v_obs, double interval) {
            return e.eta_update(DynVar{std::move(eta)}, v_obs, interval).eta;
          },
          py::arg("eta"), py::arg("v_obs"), py::arg("interval"))
      .def("candidate_interval", &StcEngine::candidate_interval, py::arg("index"), py::arg("c"), py::arg("v_obs"))
      .def(
          "next_interval",
          [](const StcEngine& e, double v_obs, std::vector<double> eta) {
            const auto ch = e.next_interval(v_obs, DynVar{std::move(eta)});
            py::dict d;
            d["interval"] = ch.interval;
            d["set_index"] = ch.set_index;
            d["fallback"] = ch.fallback;
            d["reason"] = std::string(to_string(ch.reason));
            d["c"] = ch.c_value;
            return d;
          },
          py::arg("v_obs"), py::arg("eta"));
  m.def(
      "c_value", [](double v, std::vector<double> eta, int m) { return c_value(v, DynVar{std::move(eta)}, m); },
      py::arg("v_obs"), py::arg("eta"), py::arg("window"));

  auto arm = m.def_submodule("robot_arm", "Single-link robot arm model");
  py::class_<robot_arm::Params>(arm, "Params")
      .def(py::init([](double a, double b, double theta1, double theta2) {
             return robot_arm::Params{a, b, theta1, theta2};
           }),
           py::arg("a") = 9.81 / 2.0, py::arg("b") = 2.0, py::arg("theta1") = 10.0, py::arg("theta2") = 10.0)
      .def_readwrite("a", &robot_arm::Params::a)
      .def_readwrite("b", &robot_arm::Params::b)
      .def_readwrite("theta1", &robot_arm::Params::theta1)
      .def_readwrite("theta2", &robot_arm::Params::theta2);
  arm.def("plant_rhs", &robot_arm::plant_rhs, py::arg("x_p"), py::arg("u_hat"), py::arg("p") = robot_arm::Params{});
  arm.def("controller", &robot_arm::controller, py::arg("x"), py::arg("p") = robot_arm::Params{});
  arm.def("observer_rhs", &robot_arm::observer_rhs, py::arg("x_o"), py::arg("u_hat"), py::arg("y"),
          py::arg("p") = robot_arm::Params{});
  arm.def("mean_value_gain", &robot_arm::mean_value_gain, py::arg("x1"), py::arg("e1"),
          py::arg("p") = robot_arm::Params{});
  arm.def(
      "certify_observer",
      [](const robot_arm::Params& p) {
        const auto r = certify_observer(p);
        py::dict d;
        d["pass"] = r.pass();
        d["theta1_positive"] = r.theta1_positive;
        d["theta2_dominates"] = r.theta2_dominates;
        d["quadratic_certificate"] = r.quadratic_certificate;
        d["P_o"] = Eigen::Matrix2d(r.P_o);
        d["worst_eigenvalue"] = r.worst_eigenvalue;
        return d;
      },
      py::arg("p") = robot_arm::Params{});

  m.def(
      "parse_config", [](const std::string& text) { return config_from(text).hash; }, py::arg("config_json"),
      "Validates a config document and returns its hash; raises ConfigError.");
  m.def(
      "parameter_sets",
      [](const std::string& text) {
        const auto exp = resolve(config_from(text));
        return exp.engine->sets();
      },
      py::arg("config_json") = "{}", "Parameter sets resolved for a config, ordered as the engine uses them.");
  m.def(
      "simulate",
      [](const std::string& text, std::array<double, 4> ic, double horizon, double period) {
        const auto cfg = config_from(text);
        const auto exp = resolve(cfg);
        SimOptions so;
        so.horizon = horizon;
        so.output_step = cfg.output_step;
        so.eta_init = cfg.eta_init;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = period > 0.0 ? periodic_run(initial_state(ic), period, exp.lyap, *exp.model, so)
                           : simulate_run(initial_state(ic), *exp.engine, exp.lyap, *exp.model, so);
        }
        return run_dict(r);
      },
      py::arg("config_json"), py::arg("initial"), py::arg("horizon") = 10.0, py::arg("period") = 0.0,
      "Single run from (x_p1, x_p2, x_o1, x_o2); period > 0 selects the periodic baseline.");
  m.def(
      "monte_carlo",
      [](const std::string& text) {
        const auto exp = resolve(config_from(text));
        std::string out;
        {
          py::gil_scoped_release release;
          out = to_json(monte_carlo(exp)).dump();
        }
        return out;
      },
      py::arg("config_json"), "Runs the benchmark and returns the statistics as JSON text.");
}
