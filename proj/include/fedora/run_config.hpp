#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedora/eval_harness.hpp"
#include "fedora/fedora_trainer.hpp"
#include "fedora/transform_model.hpp"

namespace fedora {

/// Every tunable of a command-line run. Loaded from an INI file:
///
///   seed = 7
///   out = runs/toy
///   [fedora]
///   iterations = 600
///
/// Paths left empty resolve below `out`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";

  // [data]
  std::filesystem::path data_path;
  std::size_t n_per_domain = 2000;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;

  // [transform]
  TransformTrainConfig transform;
  std::filesystem::path transform_checkpoint;

  // [fedora]
  FedoraConfig fedora;
  std::filesystem::path classifier_checkpoint;

  // [experiment]
  std::string experiment = "lodo";
  int repeats = 3;
  double rho_cap = 0.1;
  int checkpoints = 10;
  std::vector<double> sweep = default_sweep_values();
  /// Domain left out by `train`; empty trains on every domain.
  std::string holdout;

  // [audit]
  std::size_t audit_triples = 5;
  int audit_cells = 8;

  std::filesystem::path resolved_data_path() const;
  std::filesystem::path resolved_transform_checkpoint() const;
  std::filesystem::path resolved_classifier_checkpoint() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Throws ConfigError on syntax errors, unknown keys or unparsable values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Complete INI rendering; parse_run_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

/// Writes <out>/run_manifest.<command>.ini and returns its path.
std::filesystem::path write_manifest(const RunConfig& config, const std::string& command);

/// ExperimentPlan fields shared by eval and sweep.
ExperimentPlan make_plan(const RunConfig& config, std::vector<DomainDataset> datasets);

}  // namespace fedora
