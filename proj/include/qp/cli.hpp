#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qp/hjb.hpp"
#include "qp/mam.hpp"
#include "qp/sde.hpp"
#include "qp/system.hpp"

namespace qp {

enum class Command { Equilibria, Quasipotential, Hjb, Simulate, Compare, Multiwell };

const char* to_string(Command c);

// Aggregated field-level validation errors from config parsing.
struct ConfigError : std::runtime_error {
  std::vector<std::string> issues;
  explicit ConfigError(std::vector<std::string> issues_);
};

struct EquilibriaOptions {
  int n_starts = 200;
  double tol = 1e-9;
  double alpha = 1.0;     // radial assumption parameters
  double beta = 1.0;
  int n_samples = 512;
};

struct GridOptions {
  double h = 0.01;
  double tol = 1e-10;
  int max_sweeps = 4000;
  std::optional<std::vector<Vector>> sources;        // absent: stable equilibria
  std::optional<std::vector<double>> source_values;  // absent: all zero
};

struct MamBlock {
  MamOptions opts;
  std::optional<Vector> from;   // absent: first stable equilibrium
  std::optional<Vector> to;
  std::vector<Vector> targets;  // quasipotential_field probes (optional)
};

struct SimulateBlock {
  SimOptions opts;
  int bins = 200;
  bool stationarity = true;     // report generator averages in stats.json
  bool balls = false;
  double rho = 0.2;
  std::optional<std::vector<Vector>> ball_centers;  // absent: stable equilibria
  bool hitting = false;
  std::optional<Vector> hit_start;
  std::vector<std::pair<Vector, double>> hit_targets;
  int hit_runs = 100;
  double hit_cap = 50.0;
};

struct CompareBlock {
  std::vector<Vector> probes;   // empty: probe_count points across the inner half box
  int probe_count = 10;
};

struct MultiwellBlock {
  bool simulate = false;
  double rho = 0.2;
};

struct ExperimentConfig {
  nlohmann::json system_json;
  std::optional<SystemSpec> system;
  Command command = Command::Equilibria;
  std::string out;
  std::uint64_t seed = 0;
  bool overwrite = false;

  EquilibriaOptions equilibria;
  MamBlock mam;
  GridOptions grid;
  SimulateBlock sim;
  CompareBlock compare;
  MultiwellBlock multiwell;
};

// Strict parse: unknown keys are rejected by name, missing required fields are
// named, all option blocks validated before any computation starts.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_json(const nlohmann::json& j);

// Serializes with defaults materialized; parse(serialize(parse(x))) is identity.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Executes the command, writing artifacts plus manifest.json (file list with
// FNV-1a checksums) into cfg.out. Returns 0 on success, 3 when any result is
// flagged (non-convergence, unreliable density, abort); partial artifacts are
// kept with status FAILED in the manifest. Refuses to reuse a non-empty output
// directory unless cfg.overwrite is set (throws ConfigError).
int run(const ExperimentConfig& cfg);

// `qp <command> --config path [--overwrite] [--dotted.path value ...]`.
// Exit codes: 0 success, 2 config error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace qp
