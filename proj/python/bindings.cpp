#include "alac/alac.hpp"
#include "alac/analysis.hpp"
#include "alac/checkpoint.hpp"
#include "alac/commands.hpp"
#include "alac/config.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace alac;

namespace {

// Python works with (batch, dim) arrays; the core library is column-major.
Matrix columns(const Matrix& rows) { return rows.transpose(); }

py::dict report_dict(const BoundReport& r) {
  py::dict d;
  d["check"] = r.check;
  d["label"] = r.label;
  d["measured"] = r.measured;
  d["bound"] = r.bound;
  d["satisfied"] = r.satisfied;
  d["q"] = r.q;
  d["M"] = r.samples_m;
  d["T"] = r.horizon_t;
  d["alpha"] = r.deviation_level;
  d["margin"] = r.margin;
  d["diagnostics"] = r.diagnostics;
  return d;
}

py::list reports(const std::vector<BoundReport>& rs) {
  py::list out;
  for (const auto& r : rs) out.append(report_dict(r));
  return out;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["episode"] = r.episode;
  d["cost_return"] = r.cost_return;
  d["mean_delta_l"] = r.mean_delta_l;
  d["violation_rate"] = r.violation_rate;
  d["pos_part_delta_l"] = r.pos_part_delta_l;
  d["lambda_l"] = r.lambda_l;
  d["lambda_e"] = r.lambda_e;
  d["lambda"] = r.lambda;
  d["k"] = r.k;
  d["critic_loss"] = r.critic_loss;
  d["policy_obj"] = r.policy_obj;
  d["mean_log_prob"] = r.mean_log_prob;
  d["updates"] = r.updates;
  return d;
}

struct PyEnv {
  std::string name;
  std::shared_ptr<Env> env;
};

struct PyAgent {
  Agent agent;
  std::string env;
};

PyEnv env_of(const std::string& name, const std::map<std::string, double>& params) {
  return {name, std::shared_ptr<Env>(make_env(name, params))};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lyapunov-certified actor-critic core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("version", &version_string);

  m.def(
      "resolve_config",
      [](const std::vector<std::string>& overrides, std::optional<std::string> path) {
        const RunConfig cfg = parse_config(path, overrides);
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : config_entries(cfg)) out[k] = v;
        return out;
      },
      py::arg("overrides") = std::vector<std::string>{}, py::arg("path") = std::nullopt);

  m.def(
      "run",
      [](const std::string& command, const std::vector<std::string>& overrides, std::optional<std::string> path) {
        std::ostringstream log, err;
        const int code = run_command(
            [&]() -> int {
              const RunConfig cfg = parse_config(path, overrides);
              if (command == "train") return cmd_train(cfg, log);
              if (command == "eval") return cmd_eval(cfg, log);
              if (command == "robustness") return cmd_robustness(cfg, log);
              if (command.rfind("verify-", 0) == 0) return cmd_verify(cfg, command.substr(7), log);
              throw ConfigError("unknown command '" + command + "'");
            },
            err);
        return py::make_tuple(code, log.str() + err.str());
      },
      py::arg("command"), py::arg("overrides") = std::vector<std::string>{}, py::arg("path") = std::nullopt);

  py::class_<PyEnv>(m, "Env")
      .def_property_readonly("name", [](const PyEnv& e) { return e.name; })
      .def_property_readonly("state_dim", [](const PyEnv& e) { return e.env->spec().state_dim; })
      .def_property_readonly("action_dim", [](const PyEnv& e) { return e.env->spec().action_dim; })
      .def_property_readonly("horizon", [](const PyEnv& e) { return e.env->spec().horizon; })
      .def("equilibrium", [](const PyEnv& e) { return Vector(e.env->equilibrium()); })
      .def("reset",
           [](const PyEnv& e, std::uint64_t seed) {
             RngStream rng(seed);
             return Vector(e.env->reset(rng).s);
           })
      .def(
          "step",
          [](const PyEnv& e, const Vector& s, const Vector& a, int t) {
            const StepResult r = e.env->step({s, t}, a);
            return py::make_tuple(r.next.s, r.cost);
          },
          py::arg("state"), py::arg("action"), py::arg("t") = 0);

  m.def("make_env", &env_of, py::arg("name"), py::arg("params") = std::map<std::string, double>{});
  m.def("env_parameter_names", &env_parameter_names);

  py::class_<PyAgent>(m, "Agent")
      .def_property_readonly("env", [](const PyAgent& a) { return a.env; })
      .def_property_readonly("multipliers",
                             [](const PyAgent& a) {
                               const Multipliers& mm = a.agent.multipliers;
                               return std::map<std::string, double>{
                                   {"lambda_l", mm.lambda_l}, {"lambda_e", mm.lambda_e}, {"lambda", mm.lambda}, {"k", mm.k}};
                             })
      .def("act", [](const PyAgent& a, const Matrix& states) { return Matrix(policy_act(a.agent.policy, columns(states)).transpose()); })
      .def("lyapunov",
           [](const PyAgent& a, const Matrix& states, const Matrix& actions) {
             return Vector(critic_eval(a.agent.critic, columns(states), columns(actions)));
           })
      .def("save", [](const PyAgent& a, const std::string& path) { save_checkpoint(path, agent_checkpoint(a.agent, a.env)); });

  m.def("load_agent", [](const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    return PyAgent{agent_from_checkpoint(ck), ck.meta("env")};
  });

  m.def(
      "train",
      [](const std::vector<std::string>& overrides, std::optional<std::function<void(py::dict)>> callback) {
        const RunConfig cfg = parse_config(std::nullopt, overrides);
        validate_config(cfg);
        const auto env = make_env(cfg.env, cfg.env_params);
        MetricsSink sink;
        if (callback) sink = [&](const MetricsRecord& r) { (*callback)(record_dict(r)); };
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(cfg.resolved_train(), *env, cfg.seed, [&](const MetricsRecord& r) {
            if (sink) {
              py::gil_scoped_acquire acquire;
              sink(r);
            }
          });
        }
        py::list metrics;
        for (const auto& r : res.metrics) metrics.append(record_dict(r));
        return py::make_tuple(PyAgent{std::move(res.agent), cfg.env}, metrics);
      },
      py::arg("overrides") = std::vector<std::string>{}, py::arg("callback") = std::nullopt);

  m.def(
      "evaluate",
      [](const PyAgent& a, const PyEnv& e, int trials, std::uint64_t seed, double disturbance) {
        check_compatible(agent_checkpoint(a.agent, a.env), *e.env);
        RngStream rng = RngStream(seed).derive(6);
        const Disturbance d{disturbance};
        const EvalResult r = eval_policy(*e.env, a.agent.policy, &a.agent.critic, trials, rng, &d);
        py::dict out;
        out["cost_returns"] = r.cost_returns;
        out["mean"] = r.mean;
        out["std"] = r.stddev;
        return out;
      },
      py::arg("agent"), py::arg("env"), py::arg("trials") = 20, py::arg("seed") = 0, py::arg("disturbance") = 0.0);

  py::class_<TabularMdp>(m, "TabularMdp")
      .def_readonly("n_states", &TabularMdp::n_states)
      .def_readonly("n_actions", &TabularMdp::n_actions)
      .def_readonly("gamma", &TabularMdp::gamma)
      .def_readonly("cost", &TabularMdp::cost)
      .def_readonly("policy", &TabularMdp::policy)
      .def_readonly("rho", &TabularMdp::rho)
      .def_readonly("transitions", &TabularMdp::transitions)
      .def("policy_transition", &TabularMdp::policy_transition);

  m.def(
      "random_mdp",
      [](int n_states, int n_actions, double gamma, std::uint64_t seed, double mix_eps) {
        RngStream rng(seed);
        return random_mdp(n_states, n_actions, gamma, rng, mix_eps);
      },
      py::arg("n_states"), py::arg("n_actions"), py::arg("gamma"), py::arg("seed") = 0, py::arg("mix_eps") = 1e-3);
  m.def("load_mdp", &load_mdp);
  m.def("exact_lyapunov", &exact_lyapunov);
  m.def("stationary_distribution", &stationary_distribution);
  m.def("candidate_bound_check", [](const TabularMdp& mdp) { return reports(candidate_bound_check(mdp, exact_lyapunov(mdp))); });
  m.def(
      "check_theorem3",
      [](const TabularMdp& mdp, double k, double lam, const std::vector<int>& horizons) {
        return reports(check_theorem3(mdp, k, lam, horizons));
      },
      py::arg("mdp"), py::arg("k"), py::arg("lam"), py::arg("horizons"));
  m.def(
      "check_theorem4",
      [](const TabularMdp& mdp, double k, double lam, const std::vector<int>& ms, int horizon,
         const std::vector<double>& alphas, int reps, std::uint64_t seed) {
        RngStream rng(seed);
        return reports(check_theorem4(mdp, k, lam, ms, horizon, alphas, reps, rng));
      },
      py::arg("mdp"), py::arg("k"), py::arg("lam"), py::arg("ms"), py::arg("horizon"), py::arg("alphas"),
      py::arg("reps"), py::arg("seed") = 0);

  m.def("predicted_tracking_time", &predicted_tracking_time, py::arg("k"), py::arg("mu"), py::arg("v0"),
        py::arg("t0") = 0.0);
  m.def(
      "simulate_tracking",
      [](double k, double mu, double v0, double t0) {
        TrackingSim sim;
        sim.k = k;
        sim.mu = mu;
        sim.v0 = v0;
        sim.t0 = t0;
        const TrackingResult r = simulate_tracking(sim);
        py::dict out;
        out["predicted_time"] = r.predicted_time;
        out["measured_time"] = r.measured_time;
        out["value_at_predicted"] = r.value_at_predicted;
        out["satisfied"] = r.satisfied;
        return out;
      },
      py::arg("k"), py::arg("mu"), py::arg("v0"), py::arg("t0") = 0.0);
}
