#include "fedora/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "fedora/errors.hpp"
#include "fedora/plot.hpp"
#include "fedora/synthdata.hpp"

namespace fedora {

void ExperimentPlan::validate() const {
  if (repeats < 1) throw ValueError("ExperimentPlan: repeats must be at least 1");
  if (datasets.size() < 2) throw ValueError("ExperimentPlan: leave-one-domain-out needs at least 2 domains");
  if (checkpoints < 1) throw ValueError("ExperimentPlan: checkpoints must be at least 1");
  if (!(rho_cap >= 0.0)) throw ValueError("ExperimentPlan: rho_cap must be nonnegative");
  for (const auto& d : datasets) fedora::validate(d);
  fedora.validate();
  transform.validate();
}

const TransformModelParams* TransformCache::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const TransformModelParams& TransformCache::insert(const std::string& key, TransformModelParams params) {
  return entries_.insert_or_assign(key, std::move(params)).first->second;
}

std::uint64_t fold_seed(std::uint64_t base_seed, const std::string& target_domain, int repeat) {
  return derive_seed(base_seed, "fold/" + target_domain + "/" + std::to_string(repeat));
}

namespace {

MetricsReport evaluate_on(const ClassifierParams& params, const DomainDataset& data) {
  const Batch b = to_batch(data);
  const auto scores = predict_scores(params, b.features);
  const auto hard = hard_labels(scores);
  return evaluate_predictions(data.domain_id, b.labels, hard, scores, b.sensitive);
}

struct Selection {
  std::size_t iteration = 0;
  double accuracy = 0;
  double rho = 0;
  std::optional<ClassifierParams> params;
};

// Best validation accuracy under the rho cap; best accuracy overall when no
// checkpoint meets the cap.
class CheckpointSelector {
 public:
  CheckpointSelector(std::span<const DomainDataset> validation, double rho_cap)
      : validation_(validation), rho_cap_(rho_cap) {}

  void consider(std::size_t iteration, const ClassifierParams& params) {
    double acc = 0.0, r = 0.0;
    for (const auto& v : validation_) {
      const auto m = evaluate_on(params, v);
      acc += m.accuracy;
      r += m.rho;
    }
    acc /= static_cast<double>(validation_.size());
    r /= static_cast<double>(validation_.size());
    if (r <= rho_cap_ && (!capped_.params || acc > capped_.accuracy)) capped_ = {iteration, acc, r, params};
    if (!fallback_.params || acc > fallback_.accuracy) fallback_ = {iteration, acc, r, params};
  }

  const Selection& best() const { return capped_.params ? capped_ : fallback_; }

 private:
  std::span<const DomainDataset> validation_;
  double rho_cap_;
  Selection capped_;
  Selection fallback_;
};

RunRecord run_fold(const ExperimentPlan& plan, std::span<const DatasetSplits> splits, std::size_t target,
                   int repeat, TransformCache* cache) {
  RunRecord record;
  record.target_domain = plan.datasets[target].domain_id;
  record.repeat = repeat;
  const std::uint64_t seed = fold_seed(plan.seed, record.target_domain, repeat);

  // sources in domain-id order so a fold does not depend on dataset order
  std::vector<std::size_t> sources;
  for (std::size_t k = 0; k < splits.size(); ++k) {
    if (k != target) sources.push_back(k);
  }
  std::sort(sources.begin(), sources.end(), [&](std::size_t a, std::size_t b) {
    return plan.datasets[a].domain_id < plan.datasets[b].domain_id;
  });
  std::vector<DomainDataset> train, validation;
  for (std::size_t k : sources) {
    train.push_back(splits[k].train);
    validation.push_back(splits[k].validation);
  }

  TransformModelParams local;
  const TransformModelParams* transform = nullptr;
  if (mode_uses_transform(plan.mode)) {
    TransformTrainConfig tc = plan.transform;
    tc.seed = derive_seed(seed, "transform");
    tc.shape.inner_level = mode_uses_inner_level(plan.mode);
    const std::string key = record.target_domain + "/" + std::to_string(repeat) + "/" + to_json(tc).dump();
    transform = cache ? cache->find(key) : nullptr;
    if (!transform) {
      auto trained = train_transform(train, tc).params;
      if (cache) {
        transform = &cache->insert(key, std::move(trained));
      } else {
        local = std::move(trained);
        transform = &local;
      }
    }
  }

  FedoraConfig fc = plan.fedora;
  fc.mode = plan.mode;
  fc.seed = derive_seed(seed, "fedora");
  const std::size_t every = std::max<std::size_t>(1, fc.iterations / static_cast<std::size_t>(plan.checkpoints));
  CheckpointSelector selector(validation, plan.rho_cap);
  auto result = train_fedora(transform, train, fc,
                             [&](std::size_t it, const ClassifierParams& p) { selector.consider(it, p); }, every);
  if (fc.iterations % every != 0) selector.consider(fc.iterations, result.params);

  const auto& chosen = selector.best();
  record.selected_iteration = chosen.iteration;
  record.trace = std::move(result.trace);
  record.report = evaluate_on(*chosen.params, splits[target].test);
  return record;
}

}  // namespace

LodoResult leave_one_domain_out(const ExperimentPlan& plan, TransformCache* cache) {
  plan.validate();
  std::vector<DatasetSplits> splits;
  for (const auto& d : plan.datasets) {
    SplitPlan sp = plan.split;
    sp.seed = derive_seed(plan.split.seed, "split/" + d.domain_id);
    splits.push_back(split(d, sp));
  }

  LodoResult out;
  for (std::size_t t = 0; t < plan.datasets.size(); ++t) {
    std::vector<MetricsReport> per_repeat;
    for (int r = 0; r < plan.repeats; ++r) {
      RunRecord record;
      try {
        record = run_fold(plan, splits, t, r, cache);
      } catch (const std::exception& e) {
        record.target_domain = plan.datasets[t].domain_id;
        record.repeat = r;
        record.report.target_domain = record.target_domain;
        record.report.failure = e.what();
      }
      per_repeat.push_back(record.report);
      out.runs.push_back(std::move(record));
    }
    out.folds.push_back(aggregate(plan.datasets[t].domain_id, per_repeat));
  }

  // mean over usable folds; spread from the per-repeat fold averages
  std::vector<MetricsReport> usable;
  for (const auto& f : out.folds) {
    if (f.repeats > 0) usable.push_back(f);
  }
  std::vector<MetricsReport> repeat_means;
  for (int r = 0; r < plan.repeats; ++r) {
    std::vector<MetricsReport> ok;
    for (const auto& run : out.runs) {
      if (run.repeat == r && !run.report.failure) ok.push_back(run.report);
    }
    if (!ok.empty()) repeat_means.push_back(aggregate("average", ok));
  }
  out.average = aggregate("average", usable);
  const auto spread = aggregate("average", repeat_means);
  out.average.repeats = spread.repeats;
  out.average.accuracy_std = spread.accuracy_std;
  out.average.rho_std = spread.rho_std;
  out.average.dp_ratio_std = spread.dp_ratio_std;
  out.average.auc_fair_std = spread.auc_fair_std;
  if (usable.size() != out.folds.size()) {
    out.average.failure = std::to_string(out.folds.size() - usable.size()) + " of " +
                          std::to_string(out.folds.size()) + " folds failed";
  }
  return out;
}

std::vector<double> default_sweep_values() { return {0.01, 0.05, 0.1, 1.0, 10.0}; }

SweepResult sweep_lambda2(const ExperimentPlan& plan, std::span<const double> lambda2_values,
                          TransformCache* cache) {
  if (lambda2_values.empty()) throw ValueError("sweep_lambda2: no values");
  for (double v : lambda2_values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValueError("sweep_lambda2: values must be positive");
  }
  TransformCache local;
  if (!cache) cache = &local;
  SweepResult out;
  for (double v : lambda2_values) {
    ExperimentPlan p = plan;
    p.fedora.initial.lambda2 = v;
    p.fedora.freeze_lambda2 = true;
    auto run = leave_one_domain_out(p, cache);
    out.rows.push_back({v, run.average.accuracy, run.average.dp_ratio, run.average.rho, run.average.auc_fair});
    out.runs.push_back(std::move(run));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("spearman: sequences differ in length");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1) / 2;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

BoundAudit bound_audit(std::span<const DiscreteJoint> sources, const DiscreteJoint& target,
                       const std::function<int(int)>& classifier) {
  if (sources.empty()) throw EmptySources("bound_audit: no source domains");
  std::vector<double> source_rhos;
  for (const auto& s : sources) source_rhos.push_back(joint_rho(s, classifier));
  BoundAudit out;
  out.rho_target = joint_rho(target, classifier);
  out.bound = fairness_upper_bound(source_rhos, sources, target);
  out.satisfied = out.rho_target <= out.bound + 1e-9;
  return out;
}

namespace {

SyntheticDomainSpec random_domain(std::mt19937_64& rng, const std::string& id) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index d = 2;
  SyntheticDomainSpec spec;
  spec.domain_id = id;
  spec.target_rho = unit(rng);
  spec.n_examples = 4;
  spec.seed = rng();
  spec.semantic.class0_mean = Vector(d);
  spec.semantic.class1_mean = Vector(d);
  spec.sensitive_effect = Vector(d);
  spec.style.shift = Vector(d);
  for (Index j = 0; j < d; ++j) {
    spec.semantic.class0_mean[j] = normal(rng);
    spec.semantic.class1_mean[j] = normal(rng);
    spec.sensitive_effect[j] = normal(rng);
    spec.style.shift[j] = 0.5 * normal(rng);
  }
  spec.semantic.noise_std = 0.5 + unit(rng);
  spec.style.angle = (unit(rng) - 0.5) * std::numbers::pi / 2;
  spec.style.scale = 0.5 + unit(rng);
  return spec;
}

}  // namespace

AuditSummary audit_random_triples(std::size_t triples, int cells, std::uint64_t seed) {
  if (cells < 2 || cells > 16) throw ValueError("audit: cells must lie in [2, 16]");
  Discretization disc;
  disc.feature = 0;
  for (int k = 1; k < cells; ++k) disc.edges.push_back(-2.0 + 4.0 * k / cells);

  AuditSummary out;
  out.min_slack = std::numeric_limits<double>::infinity();
  out.details = nlohmann::json::array();
  std::mt19937_64 rng(derive_seed(seed, "audit"));
  const std::uint32_t classifiers = 1u << cells;
  for (std::size_t t = 0; t < triples; ++t) {
    std::vector<SyntheticDomainSpec> specs;
    std::vector<DiscreteJoint> joints;
    for (int k = 0; k < 3; ++k) {
      specs.push_back(random_domain(rng, "t" + std::to_string(t) + "_" + std::to_string(k)));
      joints.push_back(exact_joint(specs.back(), disc));
    }
    nlohmann::json entry;
    entry["domains"] = nlohmann::json::array();
    for (const auto& s : specs) entry["domains"].push_back(to_json(s));
    std::size_t violations = 0;
    double slack = std::numeric_limits<double>::infinity();
    for (std::size_t target = 0; target < joints.size(); ++target) {
      std::vector<DiscreteJoint> sources;
      for (std::size_t k = 0; k < joints.size(); ++k) {
        if (k != target) sources.push_back(joints[k]);
      }
      for (std::uint32_t mask = 0; mask < classifiers; ++mask) {
        const auto a = bound_audit(sources, joints[target], [mask](int cell) { return static_cast<int>((mask >> cell) & 1u); });
        ++out.checks;
        if (!a.satisfied) ++violations;
        slack = std::min(slack, a.bound - a.rho_target);
      }
    }
    entry["violations"] = violations;
    entry["min_slack"] = slack;
    out.details.push_back(std::move(entry));
    out.violations += violations;
    out.min_slack = std::min(out.min_slack, slack);
    ++out.triples;
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json run_json(const RunRecord& run) {
  return {{"repeat", run.repeat}, {"selected_iteration", run.selected_iteration}, {"report", to_json(run.report)}};
}

}  // namespace

void emit_report(const LodoResult& result, const std::filesystem::path& output_dir, const std::string& experiment) {
  const auto reports = output_dir / "reports" / experiment;
  const auto traces = output_dir / "traces" / experiment;
  nlohmann::json average;
  average["average"] = to_json(result.average);
  average["folds"] = nlohmann::json::array();
  for (const auto& fold : result.folds) {
    nlohmann::json j;
    j["report"] = to_json(fold);
    j["runs"] = nlohmann::json::array();
    const RunRecord* first = nullptr;
    for (const auto& run : result.runs) {
      if (run.target_domain != fold.target_domain) continue;
      j["runs"].push_back(run_json(run));
      if (!first && !run.trace.empty()) first = &run;
    }
    write_text(reports / ("fold_" + fold.target_domain + ".json"), j.dump(2) + "\n");
    if (first) write_trace_csv(first->trace, traces / ("fold_" + fold.target_domain + ".csv"));
    average["folds"].push_back(to_json(fold));
  }
  write_text(reports / "average.json", average.dump(2) + "\n");
}

void emit_plots(const LodoResult& result, const std::filesystem::path& output_dir, const std::string& experiment) {
  const auto dir = output_dir / "plots" / experiment;
  for (const auto& fold : result.folds) {
    const auto it = std::find_if(result.runs.begin(), result.runs.end(), [&](const RunRecord& r) {
      return r.target_domain == fold.target_domain && !r.trace.empty();
    });
    if (it == result.runs.end()) continue;
    plot::Figure losses, multipliers;
    plot::Series cls, inv, fair, l1, l2;
    for (const auto& row : it->trace) {
      const double x = static_cast<double>(row.iteration);
      for (auto* s : {&cls, &inv, &fair, &l1, &l2}) s->x.push_back(x);
      cls.y.push_back(row.cls);
      inv.y.push_back(row.inv);
      fair.y.push_back(row.fair);
      l1.y.push_back(row.lambda1);
      l2.y.push_back(row.lambda2);
    }
    cls.color = plot::palette(0);
    inv.color = plot::palette(1);
    fair.color = plot::palette(2);
    l1.color = plot::palette(1);
    l2.color = plot::palette(2);
    losses.series = {cls, inv, fair};
    multipliers.series = {l1, l2};
    plot::save(losses, dir / ("fold_" + fold.target_domain + "_losses.png"));
    plot::save(multipliers, dir / ("fold_" + fold.target_domain + "_multipliers.png"));
  }
}

void emit_sweep(const SweepResult& sweep, const std::filesystem::path& output_dir, const std::string& experiment) {
  std::string csv = "lambda2,accuracy,dp_ratio,rho,auc_fair\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : sweep.rows) {
    csv += format_double(r.lambda2) + "," + format_double(r.accuracy) + "," + format_double(r.dp_ratio) + "," +
           format_double(r.rho) + "," + format_double(r.auc_fair) + "\n";
    rows.push_back({{"lambda2", r.lambda2}, {"accuracy", r.accuracy}, {"dp_ratio", r.dp_ratio}, {"rho", r.rho},
                    {"auc_fair", r.auc_fair}});
  }
  std::vector<double> l2, acc, dp;
  for (const auto& r : sweep.rows) {
    l2.push_back(r.lambda2);
    acc.push_back(r.accuracy);
    dp.push_back(r.dp_ratio);
  }
  nlohmann::json j;
  j["rows"] = rows;
  j["spearman_lambda2_dp_ratio"] = spearman(l2, dp);
  j["spearman_lambda2_accuracy"] = spearman(l2, acc);
  const auto reports = output_dir / "reports" / experiment;
  write_text(reports / "sweep.csv", csv);
  write_text(reports / "sweep.json", j.dump(2) + "\n");

  // accuracy against dp_ratio, one marker per lambda2
  plot::Figure tradeoff;
  for (std::size_t k = 0; k < sweep.rows.size(); ++k) {
    plot::Series s{{sweep.rows[k].dp_ratio}, {sweep.rows[k].accuracy}, plot::palette(k), false};
    tradeoff.series.push_back(s);
  }
  plot::save(tradeoff, output_dir / "plots" / experiment / "tradeoff.png");
  plot::Figure by_lambda;
  by_lambda.log_x = true;
  by_lambda.series = {plot::Series{l2, acc, plot::palette(0), true}, plot::Series{l2, dp, plot::palette(1), true}};
  plot::save(by_lambda, output_dir / "plots" / experiment / "lambda2_metrics.png");
}

}  // namespace fedora
