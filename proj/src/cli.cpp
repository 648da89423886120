#include "bhp/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "bhp/errors.hpp"
#include "bhp/format.hpp"
#include "bhp/json_io.hpp"
#include "bhp/spectral.hpp"
#include "bhp/spine.hpp"

namespace bhp {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Reads fields of one config section and rejects keys it was never asked about.
class Section {
 public:
  Section(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ValidationError(where() + "must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  template <class T>
  bool read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return false;
    try {
      out = node_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(where(key) + "has the wrong type");
    }
    return true;
  }

  template <class T>
  bool read(const std::string& key, std::optional<T>& out) {
    T value{};
    if (!read(key, value)) return false;
    out = value;
    return true;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(node_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(where(it.key()) + "unknown key");
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_;
    if (!key.empty()) p = p.empty() ? key : p + "." + key;
    return "config: '" + (p.empty() ? std::string("<root>") : p) + "' ";
  }

 private:
  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::string> kExperiments = {"martingale", "wlln", "slln", "spine-consistency",
                                               "spine-decomposition"};

std::string canonical_experiment(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  if (std::find(kExperiments.begin(), kExperiments.end(), name) == kExperiments.end()) {
    std::string list;
    for (const auto& e : kExperiments) list += (list.empty() ? "" : ", ") + e;
    throw ValidationError("unknown experiment '" + name + "' (expected one of " + list + ")");
  }
  return name;
}

OffspringLaw parse_offspring(Section s) {
  std::vector<double> masses;
  std::vector<double> edges;
  std::vector<std::vector<double>> cells;
  const bool has_masses = s.read("masses", masses);
  const bool has_cells = s.read("cells", cells);
  s.read("edges", edges);
  s.finish();
  if (has_masses == has_cells)
    throw ValidationError(s.where() + "needs exactly one of 'masses' or 'cells'");
  if (has_masses) return OffspringLaw::from_masses(masses);
  return OffspringLaw::piecewise(edges, cells);
}

TestFunction parse_test_function(Section s) {
  std::string kind = "h";
  TestFunction f;
  s.read("kind", kind);
  s.read("lo", f.lo);
  s.read("hi", f.hi);
  s.finish();
  if (kind == "one")
    f.kind = TestFunction::Kind::one;
  else if (kind == "h")
    f.kind = TestFunction::Kind::h;
  else if (kind == "h_indicator")
    f.kind = TestFunction::Kind::h_indicator;
  else
    throw ValidationError(s.where("kind") + "must be one of one, h, h_indicator");
  return f;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  std::string kind;
  if (!s.read("kind", kind)) throw ValidationError(s.where("kind") + "is required");
  s.read("id", m.id);
  double sigma = 1.0;
  s.read("sigma", sigma);
  if (kind == "ou") {
    OuMotion ou;
    ou.sigma = sigma;
    if (!s.read("c", ou.c)) throw ValidationError(s.where("c") + "is required");
    s.read("dim", ou.dim);
    s.read("b", m.rate.quadratic);
    s.read("a", m.rate.constant);
    m.motion = ou;
    if (m.id.empty()) m.id = "ou";
  } else if (kind == "interval") {
    IntervalMotion iv;
    iv.sigma = sigma;
    s.read("length", iv.length);
    s.read("beta", m.rate.constant);
    m.motion = iv;
    if (s.has("point_mass")) {
      Section pm = s.child("point_mass");
      PointMass p;
      if (!pm.read("location", p.location)) throw ValidationError(pm.where("location") + "is required");
      if (!pm.read("weight", p.weight)) throw ValidationError(pm.where("weight") + "is required");
      pm.finish();
      m.rate.point_mass = p;
    }
    if (m.id.empty()) m.id = m.rate.point_mass ? "interval-point-mass" : "interval";
  } else {
    throw ValidationError(s.where("kind") + "must be 'ou' or 'interval'");
  }
  if (s.has("offspring")) m.offspring = parse_offspring(s.child("offspring"));
  s.read("dt", m.dt);
  s.read("local_time_window", m.local_time_window);
  s.finish();
  validate_model(m);
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string json_text(const Json& doc) {
  std::ostringstream s;
  write_json(s, doc);
  return s.str();
}

Json manifest_for(const LabConfig& config, const std::string& command,
                  const std::string& experiment) {
  Json doc = config.document;
  doc.erase("output");
  doc.erase("workers");
  doc.erase("run");
  doc["seed"] = config.seed;
  Json run;
  run["command"] = command;
  if (!experiment.empty()) run["experiment"] = experiment;
  run["version"] = kLabVersion;
  doc["run"] = run;
  return doc;
}

int exit_code(Verdict v) { return v == Verdict::fail ? 2 : 0; }

void write_report_outputs(const fs::path& dir, const ExperimentReport& report,
                          const Json& manifest) {
  std::ostringstream json, csv;
  write_report_json(json, report);
  write_report_csv(csv, {report});
  write_text(dir / "report.json", json.str());
  write_text(dir / "results.csv", csv.str());
  write_text(dir / "manifest.json", json_text(manifest));
  Json timing;
  timing["experiment"] = report.name;
  timing["wall_seconds"] = report.wall_seconds;
  write_text(dir / "timing.json", json_text(timing));
}

void print_summary(std::ostream& out, const ExperimentReport& r) {
  out << r.name << " [" << r.model_id << "] verdict: " << verdict_name(r.verdict) << '\n';
  for (const auto& c : r.comparisons) {
    out << "  " << std::left << std::setw(52) << c.label << ' ';
    if (c.t) out << "t=" << format_real(*c.t) << ' ';
    out << "est=" << format_real(c.estimate);
    if (c.stderr_ > 0.0) out << " se=" << format_real(c.stderr_);
    if (c.oracle) out << " oracle=" << format_real(*c.oracle) << " [" << c.provenance << ']';
    out << ' ' << verdict_name(c.verdict) << '\n';
  }
  for (const auto& n : r.notes) out << "  note: " << n << '\n';
}

int report_command(const fs::path& dir, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(dir)) {
    err << "report: '" << dir.string() << "' is not a directory\n";
    return 1;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() == "report.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    err << "report: no report.json found under '" << dir.string() << "'\n";
    return 1;
  }
  out << std::left << std::setw(22) << "experiment" << std::setw(22) << "model" << std::setw(20)
      << "verdict" << std::setw(8) << "rows" << "failed rows\n";
  for (const auto& file : files) {
    std::ifstream in(file);
    const ExperimentReport r = read_report_json(in);
    std::string failed;
    for (const auto& c : r.comparisons)
      if (c.verdict == Verdict::fail) failed += (failed.empty() ? "" : "; ") + c.label;
    out << std::left << std::setw(22) << r.name << std::setw(22) << r.model_id << std::setw(20)
        << verdict_name(r.verdict) << std::setw(8) << r.comparisons.size()
        << (failed.empty() ? "-" : failed) << '\n';
  }
  return 0;
}

}  // namespace

LabConfig parse_config(const Json& document) {
  LabConfig c;
  c.document = document;
  Section root(document, "");
  if (!document.contains("model")) throw ValidationError("config: missing required section 'model'");
  c.model = parse_model(root.child("model"));

  if (root.has("spectral")) {
    Section s = root.child("spectral");
    s.read("nodes", c.spectral.nodes);
    s.read("radius", c.spectral.radius);
    s.read("modes", c.spectral.modes);
    s.read("grid", c.spectral.grid);
    s.read("t0", c.experiment.t0);
    s.read("t1", c.experiment.t1);
    s.finish();
  }

  ExperimentSettings& e = c.experiment;
  e.x = c.model.is_interval() ? 0.5 * c.model.interval().length : 0.0;
  if (root.has("experiment")) {
    Section s = root.child("experiment");
    if (s.read("name", c.experiment_name)) c.experiment_name = canonical_experiment(c.experiment_name);
    s.read("x", e.x);
    s.read("t_grid", e.t_grid);
    s.read("horizon", e.horizon);
    s.read("t_max", e.t_max);
    s.read("lattice_spacing", e.lattice_spacing);
    s.read("n_max", e.n_max);
    s.read("replicas", e.replicas);
    s.read("z", e.z);
    s.read("delta", e.delta);
    s.read("slln_fraction", e.slln_fraction);
    s.read("slln_band", e.slln_band);
    s.read("dt", e.dt);
    s.read("population_cap", e.population_cap);
    if (s.has("f")) e.f = parse_test_function(s.child("f"));
    s.finish();
  }
  if (e.replicas == 0) throw ValidationError("config: 'experiment.replicas' must be positive");

  SimulateSettings& sim = c.simulate;
  sim.x = e.x;
  if (root.has("simulate")) {
    Section s = root.child("simulate");
    s.read("x", sim.x);
    s.read("horizon", sim.horizon);
    s.read("observation_times", sim.observation_times);
    s.read("record_paths", sim.record_paths);
    s.read("ledger_times", sim.ledger_times);
    s.read("dt", sim.dt);
    s.finish();
  }
  if (!(sim.horizon > 0.0)) throw ValidationError("config: 'simulate.horizon' must be positive");

  root.read("seed", c.seed);
  root.read("output", c.output);
  unsigned workers = 0;
  if (root.read("workers", workers)) c.workers = workers;
  if (root.has("run")) {
    Section s = root.child("run");
    std::string command, experiment, version;
    if (s.read("command", command)) c.run_command = command;
    if (s.read("experiment", experiment)) c.run_experiment = experiment;
    s.read("version", version);
    s.finish();
  }
  root.finish();
  c.experiment.seed = c.seed;
  return c;
}

LabConfig parse_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(Json::object());
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < ex.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << "config: syntax error at line " << line << ", column " << column;
    throw ValidationError(msg.str());
  }
  if (!doc.is_object()) throw ValidationError("config: the document must be an object with a 'model' section");
  return parse_config(doc);
}

ResolvedModel resolve_model(const LabConfig& config, bool allow_subcritical) {
  ResolvedModel r;
  r.model = config.model;
  const ModelSpec& m = r.model;
  const bool binary = !m.offspring.position_dependent() &&
                      std::abs(mean_offspring(m.offspring, 0.0) - 2.0) < 1e-14 &&
                      m.offspring.masses_at(0.0).size() == 3;
  const auto& sp = config.spectral;
  bool closed = false;
  if (m.is_ou()) {
    const auto& ou = m.ou();
    if (binary && ou.sigma == 1.0) {
      if (!(ou.c * ou.c > 2.0 * m.rate.quadratic))
        throw PreconditionError("OU model: need c > sqrt(2b)");
      r.spectral = ou_closed_form(ou.c, m.rate.quadratic, m.rate.constant, ou.dim);
      closed = true;
    }
  } else if (binary && !m.rate.point_mass) {
    r.spectral = interval_closed_form(m.rate.constant, m.interval().length, m.interval().sigma);
    closed = true;
  }
  if (!closed || sp.grid) {
    if (m.is_ou() && m.ou().dim != 1) throw PreconditionError("the grid solver is one-dimensional");
    auto grid = grid_spectral_triple(m, sp.nodes, sp.modes, sp.radius, false);
    if (closed)
      r.grid = std::move(grid);
    else
      r.spectral = std::move(grid);
  }
  if (!allow_subcritical && !(r.spectral.lambda1 < 0.0)) {
    std::ostringstream msg;
    msg << "lambda1 = " << r.spectral.lambda1 << " >= 0 (subcritical)";
    throw SubcriticalityError(msg.str());
  }
  return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Branching Hunt process laboratory", "bhp_lab"};
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<unsigned> workers_flag;
  std::string out_flag;
  std::string experiment_arg;
  std::string report_dir;
  app.add_option("--config", config_path, "JSON configuration (or a manifest)");
  app.add_option("--seed", seed_flag, "base seed (overrides the config)");
  app.add_option("--workers", workers_flag, "worker threads (fallback: BHP_LAB_WORKERS)");
  app.add_option("--out", out_flag, "output directory");
  app.fallthrough();
  auto* spectral_cmd = app.add_subcommand("spectral", "spectral report for the model");
  auto* simulate_cmd = app.add_subcommand("simulate", "simulate one forest");
  auto* spine_cmd = app.add_subcommand("spine", "simulate one spine tree");
  auto* verify_cmd = app.add_subcommand("verify", "run a statistical experiment");
  verify_cmd->add_option("experiment", experiment_arg, "martingale | wlln | slln | spine-consistency | spine-decomposition");
  auto* report_cmd = app.add_subcommand("report", "summarize stored reports");
  report_cmd->add_option("dir", report_dir, "directory with report.json files")->required();
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (report_cmd->parsed()) return report_command(report_dir, out, err);

    if (config_path.empty()) {
      err << "error: --config is required\n\n" << app.help();
      return 1;
    }
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      err << "error: cannot read config '" << config_path << "'\n";
      return 1;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    LabConfig config = parse_config_text(buffer.str());
    if (seed_flag) {
      config.seed = *seed_flag;
      config.experiment.seed = *seed_flag;
    }
    unsigned workers = 1;
    if (workers_flag)
      workers = *workers_flag;
    else if (const char* env = std::getenv("BHP_LAB_WORKERS"); env && *env)
      workers = static_cast<unsigned>(std::stoul(env));
    else if (config.workers)
      workers = *config.workers;
    config.experiment.workers = std::max(1u, workers);

    std::string command;
    if (spectral_cmd->parsed()) command = "spectral";
    else if (simulate_cmd->parsed()) command = "simulate";
    else if (spine_cmd->parsed()) command = "spine";
    else if (verify_cmd->parsed()) command = "verify";
    else if (config.run_command) command = *config.run_command;
    if (command.empty()) {
      err << "error: no subcommand given and the config has no 'run' section\n\n" << app.help();
      return 1;
    }
    std::string experiment;
    if (command == "verify") {
      experiment = !experiment_arg.empty() ? experiment_arg
                   : config.run_experiment ? *config.run_experiment
                                           : config.experiment_name;
      if (experiment.empty()) throw ValidationError("verify: no experiment named");
      experiment = canonical_experiment(experiment);
    }

    const fs::path dir = !out_flag.empty() ? fs::path(out_flag)
                         : config.output  ? fs::path(*config.output)
                                          : fs::path("bhp-out");
    fs::create_directories(dir);
    const Json manifest = manifest_for(config, command, experiment);

    if (command == "spectral") {
      const ResolvedModel rm = resolve_model(config, true);
      const ExperimentReport report = spectral_report(rm.model, rm.spectral, rm.grid, config.experiment);
      write_report_outputs(dir, report, manifest);
      print_summary(out, report);
      return exit_code(report.verdict);
    }
    if (command == "simulate" || command == "spine") {
      const ResolvedModel rm = resolve_model(config, command == "simulate");
      SimulationOptions opts;
      opts.observation_times = config.simulate.observation_times;
      opts.record_paths = config.simulate.record_paths;
      opts.dt = config.simulate.dt;
      RandomStream rng(config.seed);
      std::ostringstream text;
      if (command == "simulate") {
        const Forest forest = simulate_forest(rm.model, config.simulate.x, config.simulate.horizon, rng, opts);
        write_forest_records(text, forest);
        write_text(dir / "forest.tsv", text.str());
        out << "forest: " << forest.size() << " nodes -> " << (dir / "forest.tsv").string() << '\n';
      } else {
        const SpineTree tree = simulate_spine_tree(rm.model, rm.spectral, config.simulate.x,
                                                   config.simulate.horizon, rng, opts);
        std::vector<double> ledger = config.simulate.ledger_times;
        if (ledger.empty()) ledger.push_back(config.simulate.horizon);
        write_spine_records(text, tree, rm.spectral, ledger);
        write_text(dir / "spine.tsv", text.str());
        out << "spine tree: " << tree.forest.size() << " nodes, " << tree.fissions.size()
            << " spine fissions -> " << (dir / "spine.tsv").string() << '\n';
      }
      write_text(dir / "manifest.json", json_text(manifest));
      return 0;
    }
    if (command != "verify") throw ValidationError("unknown command '" + command + "' in run section");

    const ResolvedModel rm = resolve_model(config, experiment == "martingale");
    const ExperimentSettings& s = config.experiment;
    ExperimentReport report;
    if (experiment == "martingale")
      report = martingale_and_llogl_experiment(rm.model, rm.spectral, s);
    else if (experiment == "wlln")
      report = wlln_experiment(rm.model, rm.spectral, s);
    else if (experiment == "slln")
      report = slln_experiment(rm.model, rm.spectral, s);
    else if (experiment == "spine-consistency")
      report = spine_consistency_experiment(rm.model, rm.spectral, s);
    else
      report = spine_decomposition_experiment(rm.model, rm.spectral, s);
    write_report_outputs(dir, report, manifest);
    print_summary(out, report);
    return exit_code(report.verdict);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace bhp
