#pragma once

// The `symspot` command-line front end as a library, so scripts and tests
// can drive it in-process.

#include <ostream>
#include <string>
#include <vector>

#include "symspot/json.hpp"
#include "symspot/synthetic.hpp"

namespace symspot::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kIoError = 3,
  kCheckFailed = 4,
  kDataError = 5,  // malformed geometry, too many vertices, label problems
};

struct RunConfig {
  GraphConfig graph;
  ModelConfig model;
  TrainConfig train;
  Ablation ablation;
  SyntheticSpec synthetic;
  /// Seeds parameter initialization and synthetic generation.
  std::uint64_t seed = 0;
  double prune_threshold = kDefaultPruneThreshold;
  int jobs = 1;
  /// Split drawings into 10 m blocks before building graphs.
  bool tile = false;
  /// Class table for bare records: "floorplan" or "synthetic:<count>".
  /// Manifests carry their own table.
  std::string classes = "floorplan";
  /// Set when model.num_classes came from a config file or override; the
  /// dataset's class count is used otherwise.
  bool num_classes_explicit = false;
};

Json to_json(const SyntheticSpec& spec);
void from_json(const Json& j, SyntheticSpec& spec, const std::string& where = "synthetic");

Json to_json(const RunConfig& cfg);
/// Missing keys keep their current value; unknown keys throw ConfigError.
void from_json(const Json& j, RunConfig& cfg);

/// Applies "a.b.c=value" to a config tree. The value is read as JSON when
/// it parses and as a string otherwise.
void apply_override(Json& tree, const std::string& assignment);

/// Defaults, then the config file (if any), then overrides in order.
RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides);

ClassTable class_table_from_name(const std::string& name);

/// Parses "full", "baseline", "rse_only", "cee_only" or "single_stage:<n>".
Ablation ablation_from_name(const std::string& name);

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// line-delimited JSON log records to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace symspot::cli
