#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedora/core_data.hpp"
#include "fedora/fairness_metrics.hpp"
#include "fedora/fedora_trainer.hpp"
#include "fedora/transform_model.hpp"

namespace fedora {

struct ExperimentPlan {
  std::vector<DomainDataset> datasets;
  TrainMode mode = TrainMode::full;
  FedoraConfig fedora;
  TransformTrainConfig transform;
  int repeats = 3;
  std::filesystem::path output_dir;
  std::string experiment = "lodo";
  SplitPlan split;
  /// Checkpoints whose average source-validation rho exceeds this cap are
  /// only chosen when none satisfies it; then accuracy alone decides.
  double rho_cap = 0.1;
  /// Validation checkpoints per training run.
  int checkpoints = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Trained transformation models keyed by fold, repeat and transform config.
class TransformCache {
 public:
  const TransformModelParams* find(const std::string& key) const;
  const TransformModelParams& insert(const std::string& key, TransformModelParams params);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, TransformModelParams> entries_;
};

/// One classifier training run inside a fold.
struct RunRecord {
  std::string target_domain;
  int repeat = 0;
  std::vector<FedoraTraceRow> trace;
  std::size_t selected_iteration = 0;
  MetricsReport report;
};

struct LodoResult {
  /// One report per target in dataset order, aggregated over repeats.
  std::vector<MetricsReport> folds;
  MetricsReport average;
  std::vector<RunRecord> runs;
};

/// Seed of one (target, repeat) run; independent of domain order.
std::uint64_t fold_seed(std::uint64_t base_seed, const std::string& target_domain, int repeat);

/// Holds out each domain in turn. Failed runs are recorded and skipped.
LodoResult leave_one_domain_out(const ExperimentPlan& plan, TransformCache* cache = nullptr);

struct SweepRow {
  double lambda2 = 0;
  double accuracy = 0;
  double dp_ratio = 0;
  double rho = 0;
  double auc_fair = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<LodoResult> runs;
};

std::vector<double> default_sweep_values();

/// leave_one_domain_out once per value with lambda2 held fixed.
SweepResult sweep_lambda2(const ExperimentPlan& plan, std::span<const double> lambda2_values,
                          TransformCache* cache = nullptr);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct BoundAudit {
  double rho_target = 0;
  double bound = 0;
  bool satisfied = false;
};

BoundAudit bound_audit(std::span<const DiscreteJoint> sources, const DiscreteJoint& target,
                       const std::function<int(int)>& classifier);

struct AuditSummary {
  std::size_t triples = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  /// Smallest bound - rho_target seen.
  double min_slack = 0;
  nlohmann::json details;
};

/// Random enumerable triples: every deterministic cell classifier is
/// audited with the first domain as target.
AuditSummary audit_random_triples(std::size_t triples, int cells, std::uint64_t seed);

/// reports/<experiment>/fold_<domain>.json, average.json; traces of the
/// first repeat under traces/<experiment>/.
void emit_report(const LodoResult& result, const std::filesystem::path& output_dir,
                 const std::string& experiment);
/// Loss and multiplier trajectories under plots/<experiment>/.
void emit_plots(const LodoResult& result, const std::filesystem::path& output_dir,
                const std::string& experiment);

/// reports/<experiment>/sweep.csv, sweep.json and plots/<experiment>/tradeoff.png.
void emit_sweep(const SweepResult& sweep, const std::filesystem::path& output_dir,
                const std::string& experiment);

}  // namespace fedora
