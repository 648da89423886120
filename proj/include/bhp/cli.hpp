#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bhp/model.hpp"
#include "bhp/verify.hpp"

namespace bhp {

inline constexpr const char* kLabVersion = "bhp-lab 0.1.0";

struct SpectralSettings {
  int nodes = 2000;
  double radius = 0.0;
  int modes = 2;
  /// Also solve on the grid when closed forms exist (for comparison).
  bool grid = false;
};

struct SimulateSettings {
  double x = 0.0;
  double horizon = 1.0;
  std::vector<double> observation_times;
  bool record_paths = false;
  std::vector<double> ledger_times;
  std::optional<double> dt;
};

/// Parsed configuration document. `document` keeps the input (with the seed
/// resolved) for the manifest.
struct LabConfig {
  nlohmann::ordered_json document;
  ModelSpec model;
  SpectralSettings spectral;
  ExperimentSettings experiment;
  std::string experiment_name;
  SimulateSettings simulate;
  std::uint64_t seed = 1;
  std::optional<std::string> output;
  std::optional<unsigned> workers;
  /// Command recorded by a manifest ("run" section).
  std::optional<std::string> run_command;
  std::optional<std::string> run_experiment;
};

/// Throws ValidationError naming the offending field (unknown keys, wrong
/// types, missing model section, invalid physical parameters).
LabConfig parse_config(const nlohmann::ordered_json& document);
/// Parses text; syntax errors report line and column.
LabConfig parse_config_text(const std::string& text);

struct ResolvedModel {
  ModelSpec model;
  SpectralTriple spectral;
  /// Grid solve for comparison against closed forms.
  std::optional<SpectralTriple> grid;
};

/// Closed forms for binary catalog models, grid solves otherwise. With
/// `allow_subcritical` the sign of lambda1 is left to the caller.
ResolvedModel resolve_model(const LabConfig& config, bool allow_subcritical = false);

/// Entry point of the bhp_lab tool. Exit codes: 0 pass or hypothesis not
/// met, 2 failed verdict, 1 error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bhp
