#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bhp/cli.hpp"
#include "bhp/errors.hpp"
#include "bhp/forest.hpp"
#include "bhp/rng.hpp"
#include "bhp/spectral.hpp"
#include "bhp/spine.hpp"
#include "bhp/verify.hpp"

namespace py = pybind11;
using namespace bhp;

namespace {

py::dict spectrum(const std::string& config_text, bool allow_subcritical) {
  const LabConfig config = parse_config_text(config_text);
  const ResolvedModel rm = resolve_model(config, allow_subcritical);
  py::dict d;
  d["lambda1"] = rm.spectral.lambda1;
  d["lambda2"] = rm.spectral.lambda2;
  d["gap"] = rm.spectral.gap;
  d["h_norm_check"] = rm.spectral.h_norm_check;
  d["closed_form"] = rm.spectral.closed_form();
  return d;
}

std::vector<double> ground_state(const std::string& config_text, const std::vector<double>& xs) {
  const ResolvedModel rm = resolve_model(parse_config_text(config_text), true);
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(rm.model.inside(x) ? rm.spectral.h(x) : 0.0);
  return out;
}

double kernel(const std::string& config_text, double t, double x, double y) {
  const ResolvedModel rm = resolve_model(parse_config_text(config_text), true);
  return kernel_h(rm.spectral, t, x, y);
}

// Positions alive at t = 0, each observation time and the horizon.
py::dict simulate(const std::string& config_text, bool spine) {
  const LabConfig config = parse_config_text(config_text);
  const ResolvedModel rm = resolve_model(config, !spine);
  SimulationOptions opts;
  opts.observation_times = config.simulate.observation_times;
  opts.dt = config.simulate.dt;
  RandomStream rng(config.seed);
  const double x = config.simulate.x, horizon = config.simulate.horizon;
  Forest forest;
  py::dict d;
  if (spine) {
    SpineTree tree = simulate_spine_tree(rm.model, rm.spectral, x, horizon, rng, opts);
    d["spine_nodes"] = tree.spine_nodes;
    forest = std::move(tree.forest);
  } else {
    forest = simulate_forest(rm.model, x, horizon, rng, opts);
  }
  std::vector<double> times = forest.observation_times;
  times.insert(times.begin(), 0.0);
  times.push_back(horizon);
  py::list snaps;
  for (double t : times) {
    std::vector<double> pos;
    for (const auto& p : snapshot(forest, t).particles) pos.push_back(p.position);
    py::dict s;
    s["t"] = t;
    s["positions"] = pos;
    snaps.append(s);
  }
  d["nodes"] = forest.size();
  d["snapshots"] = snaps;
  if (!spine) d["martingale"] = martingale_value(forest, horizon, rm.spectral);
  std::ostringstream text;
  write_forest_records(text, forest);
  d["records"] = text.str();
  return d;
}

std::string verify(const std::string& config_text, std::string experiment, unsigned workers) {
  LabConfig config = parse_config_text(config_text);
  if (experiment.empty()) experiment = config.experiment_name;
  config.experiment.workers = workers;
  ExperimentReport report;
  if (experiment == "spectral") {
    const ResolvedModel rm = resolve_model(config, true);
    report = spectral_report(rm.model, rm.spectral, rm.grid, config.experiment);
  } else {
    const ResolvedModel rm = resolve_model(config, experiment == "martingale");
    const ExperimentSettings& s = config.experiment;
    if (experiment == "martingale")
      report = martingale_and_llogl_experiment(rm.model, rm.spectral, s);
    else if (experiment == "wlln")
      report = wlln_experiment(rm.model, rm.spectral, s);
    else if (experiment == "slln")
      report = slln_experiment(rm.model, rm.spectral, s);
    else if (experiment == "spine-consistency")
      report = spine_consistency_experiment(rm.model, rm.spectral, s);
    else if (experiment == "spine-decomposition")
      report = spine_decomposition_experiment(rm.model, rm.spectral, s);
    else
      throw ValidationError("unknown experiment '" + experiment + "'");
  }
  std::ostringstream out;
  write_report_json(out, report);
  return out.str();
}

py::tuple run(const std::vector<std::string>& args) {
  std::vector<std::string> all{"bhp_lab"};
  all.insert(all.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : all) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Branching Hunt process laboratory";
  m.attr("version") = kLabVersion;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<DegenerateLawError>(m, "DegenerateLawError", PyExc_ValueError);
  py::register_exception<SubcriticalityError>(m, "SubcriticalityError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

  m.def("spectrum", &spectrum, py::arg("config"), py::arg("allow_subcritical") = false);
  m.def("ground_state", &ground_state, py::arg("config"), py::arg("xs"));
  m.def("kernel_h", &kernel, py::arg("config"), py::arg("t"), py::arg("x"), py::arg("y"));
  m.def("simulate", &simulate, py::arg("config"), py::arg("spine") = false);
  m.def("verify", &verify, py::arg("config"), py::arg("experiment") = "", py::arg("workers") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("run_cli", &run, py::arg("args"));
}
