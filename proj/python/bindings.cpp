#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "leverbid/dynamics.hpp"
#include "leverbid/exposure_fit.hpp"
#include "leverbid/harness.hpp"

namespace py = pybind11;
using namespace leverbid;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict step_dict(const StepResult& r) {
  py::dict d;
  d["reward"] = r.reward;
  d["done"] = r.done;
  d["alphas"] = r.alphas;
  d["increments"] = r.increments;
  d["weighted"] = r.weighted;
  d["organic"] = r.organic;
  d["organic_manual"] = r.organic_manual;
  d["business"] = r.business;
  d["business_manual"] = r.business_manual;
  return d;
}

py::dict outcome_dict(const EpisodeOutcome& o) {
  py::dict d;
  d["episode_return"] = o.episode_return;
  d["discounted_return"] = o.discounted_return;
  d["organic_increment"] = o.organic_increment;
  d["business_increment"] = o.business_increment;
  d["organic_policy"] = o.organic_policy;
  d["organic_manual"] = o.organic_manual;
  d["business_policy"] = o.business_policy;
  d["business_manual"] = o.business_manual;
  return d;
}

// A Python policy receives the kStateDim x K feature matrix and returns K ratios.
Policy wrap_policy(const py::object& policy) {
  if (py::isinstance<py::float_>(policy) || py::isinstance<py::int_>(policy)) {
    return fixed_policy(policy.cast<double>());
  }
  auto fn = policy.cast<std::function<std::vector<double>(Eigen::MatrixXd)>>();
  return [fn](const Environment& env) {
    py::gil_scoped_acquire gil;
    return fn(env.state_matrix());
  };
}

TrafficWinFn traffic_from(const py::dict& d) {
  TrafficWinFn t;
  t.threshold = d["threshold"].cast<double>();
  t.saturation = d["saturation"].cast<double>();
  t.steepness = d["steepness"].cast<double>();
  return t;
}

ExposureEffectFn exposure_from(const py::dict& d) {
  ExposureEffectFn u;
  u.peak_exposure = d["peak_exposure"].cast<double>();
  u.peak_score = d["peak_score"].cast<double>();
  u.floor_score = d["floor_score"].cast<double>();
  if (d.contains("decay")) u.decay = d["decay"].cast<double>();
  if (d.contains("offset")) u.offset = d["offset"].cast<double>();
  if (d.contains("lift")) u.lift = d["lift"].cast<double>();
  return u;
}

}  // namespace

PYBIND11_MODULE(_leverbid, m) {
  m.doc() = "Organic-traffic leverage simulator and bidding agents";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<nn::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<Environment>(m, "Environment")
      .def(py::init([](const std::string& path) { return Environment(EnvConfig::load(path)); }), py::arg("path"))
      .def_static(
          "from_config",
          [](const py::object& cfg) { return Environment(EnvConfig::from_json(from_python(cfg))); },
          py::arg("config"))
      .def("reset", [](Environment& e, std::uint64_t seed) { e.reset(seed); }, py::arg("seed"))
      .def("step", [](Environment& e, const std::vector<double>& a) { return step_dict(e.step(a)); }, py::arg("alphas"))
      .def("state_matrix", py::overload_cast<>(&Environment::state_matrix, py::const_))
      .def_property_readonly("done", &Environment::done)
      .def_property_readonly("t", &Environment::t)
      .def_property_readonly("num_targets", &Environment::num_targets)
      .def_property_readonly("target_ids", &Environment::target_ids)
      .def_property_readonly("scores", &Environment::scores)
      .def("config", [](const Environment& e) { return to_python(e.config().to_json()); });

  m.def(
      "run_episode",
      [](Environment& env, std::uint64_t seed, const py::object& policy) {
        return outcome_dict(run_episode(env, seed, wrap_policy(policy)));
      },
      py::arg("env"), py::arg("seed"), py::arg("policy") = 0.0,
      "Runs one episode; policy is a constant ratio or a callable on the feature matrix.");

  m.def(
      "compute_reward",
      [](const std::vector<double>& increments, const std::string& weighting) {
        if (weighting == "unit") return compute_reward(increments, RewardWeighting::unit);
        if (weighting == "inverse_abs") return compute_reward(increments, RewardWeighting::inverse_abs);
        throw std::invalid_argument("weighting must be 'unit' or 'inverse_abs'");
      },
      py::arg("increments"), py::arg("weighting") = "unit");

  m.def(
      "fixed_points",
      [](const py::dict& traffic_win, const py::dict& exposure_effect, double search_max) {
        return to_python(to_json(fixed_points(traffic_from(traffic_win), exposure_from(exposure_effect), search_max)));
      },
      py::arg("traffic_win"), py::arg("exposure_effect"), py::arg("search_max"));

  m.def(
      "simulate_chain",
      [](const py::dict& traffic_win, const py::dict& exposure_effect, double p0, int steps) {
        std::vector<std::pair<double, double>> out;
        for (const auto& c : simulate_chain(traffic_from(traffic_win), exposure_from(exposure_effect), p0, steps)) {
          out.emplace_back(c.z, c.p);
        }
        return out;
      },
      py::arg("traffic_win"), py::arg("exposure_effect"), py::arg("p0"), py::arg("steps"));

  py::class_<FittedExposureFn>(m, "FittedExposure")
      .def_property_readonly("bandwidth", &FittedExposureFn::bandwidth)
      .def("__call__", [](const FittedExposureFn& f, double p) { return eval_fit(f, p); })
      .def("to_json", [](const FittedExposureFn& f) { return to_python(fit_to_json(f)); });

  m.def(
      "fit_exposure",
      [](const std::vector<double>& p, const std::vector<double>& z, std::optional<double> bandwidth) {
        if (p.size() != z.size()) throw std::invalid_argument("p and z_next differ in length");
        std::vector<ExposureSample> s;
        for (std::size_t i = 0; i < p.size(); ++i) s.push_back({p[i], z[i]});
        return fit_exposure(s, bandwidth);
      },
      py::arg("p"), py::arg("z_next"), py::arg("bandwidth") = py::none());

  m.def(
      "cv_bandwidth",
      [](const std::vector<double>& p, const std::vector<double>& z) {
        if (p.size() != z.size()) throw std::invalid_argument("p and z_next differ in length");
        std::vector<ExposureSample> s;
        for (std::size_t i = 0; i < p.size(); ++i) s.push_back({p[i], z[i]});
        return cv_bandwidth(s);
      },
      py::arg("p"), py::arg("z_next"), "Leave-one-out cross-validated kernel bandwidth.");

  m.def(
      "run_experiment",
      [](const std::string& config, const std::string& out_dir, std::optional<std::vector<std::string>> algorithms,
         std::optional<int> episodes, std::optional<std::vector<std::uint64_t>> seeds, int jobs) {
        ExperimentConfig cfg = ExperimentConfig::load(config);
        if (algorithms) {
          cfg.algorithms.clear();
          for (const auto& a : *algorithms) cfg.algorithms.push_back(parse_algorithm(a));
        }
        if (episodes) cfg.episodes = *episodes;
        if (seeds) cfg.seeds = *seeds;
        cfg.validate();
        RunOptions o;
        o.out_dir = out_dir;
        o.jobs = jobs;
        std::vector<RunResult> runs;
        {
          py::gil_scoped_release release;
          runs = run_experiment(cfg, o);
        }
        return to_python(summarize(runs).to_json());
      },
      py::arg("config"), py::arg("out_dir"), py::arg("algorithms") = py::none(), py::arg("episodes") = py::none(),
      py::arg("seeds") = py::none(), py::arg("jobs") = 1, "Trains and writes curves; returns the summary table.");

  m.def(
      "compare",
      [](const std::string& dir, const std::vector<std::string>& order) {
        return to_python(compare_dir(dir, order).to_json());
      },
      py::arg("dir"), py::arg("expected_order") = std::vector<std::string>{"htlb_ddpg", "ddpg", "a2c", "cem", "manual"});

  py::class_<LoadedCheckpoint>(m, "Checkpoint")
      .def_readonly("algorithm", &LoadedCheckpoint::algorithm)
      .def_readonly("eval_seeds", &LoadedCheckpoint::eval_seeds)
      .def(
          "evaluate",
          [](const LoadedCheckpoint& c, std::optional<std::vector<std::uint64_t>> seeds) {
            Environment env = c.make_environment();
            const EvalSummary s = evaluate_policy(env, seeds.value_or(c.eval_seeds), c.policy);
            py::dict d;
            d["mean"] = s.mean;
            d["stddev"] = s.stddev;
            d["returns"] = s.returns;
            return d;
          },
          py::arg("seeds") = py::none())
      .def("act", [](const LoadedCheckpoint& c, const Environment& env) { return c.policy(env); });

  m.def("load_checkpoint", &load_checkpoint, py::arg("dir"));
}
