#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "fedora/core_data.hpp"
#include "fedora/errors.hpp"
#include "fedora/eval_harness.hpp"
#include "fedora/fedora_trainer.hpp"
#include "fedora/run_config.hpp"
#include "fedora/synthdata.hpp"
#include "fedora/transform_model.hpp"

namespace {

using namespace fedora;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.mode) c.fedora.mode = parse_mode(*o.mode);
  c.validate();
  return c;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<DomainDataset> load_data(const RunConfig& c) {
  const auto path = c.resolved_data_path();
  if (!std::filesystem::exists(path)) throw MissingInput("data file " + path.string() + " not found (run gen first)");
  return load_tabular(path);
}

// Training domains: everything except the configured holdout.
std::vector<DomainDataset> training_domains(const RunConfig& c, std::vector<DomainDataset> all,
                                            std::optional<DomainDataset>* held_out = nullptr) {
  if (c.holdout.empty()) return all;
  std::vector<DomainDataset> kept;
  for (auto& d : all) {
    if (d.domain_id == c.holdout) {
      if (held_out) *held_out = d;
    } else {
      kept.push_back(std::move(d));
    }
  }
  if (kept.size() == all.size()) throw ConfigError("config key 'experiment.holdout': no domain '" + c.holdout + "'");
  return kept;
}

void cmd_gen(const RunConfig& c) {
  const auto bench = default_benchmark(c.n_per_domain, derive_seed(c.seed, "gen"));
  const auto data = gen_benchmark(bench);
  const auto path = c.resolved_data_path();
  save_tabular(data, path);
  auto manifest = path;
  write_json(manifest.replace_extension(".json"), to_json(bench));
  std::cout << "wrote " << data.size() << " domains to " << path.string() << '\n';
}

void cmd_train_transform(const RunConfig& c) {
  const auto data = training_domains(c, load_data(c));
  TransformTrainConfig tc = c.transform;
  tc.seed = derive_seed(c.seed, "transform");
  tc.shape.inner_level = mode_uses_inner_level(c.fedora.mode);
  const auto model = train_transform(data, tc);
  const auto path = c.resolved_transform_checkpoint();
  save_checkpoint(model, tc, path);
  write_trace_csv(std::span<const TransformTraceRow>(model.trace), path.parent_path() / "trace.csv");
  const auto& first = model.trace.front();
  const auto& last = model.trace.back();
  std::cout << "L_data " << first.data_recon << " -> " << last.data_recon << "; checkpoint " << path.string() << '\n';
}

void cmd_train(const RunConfig& c) {
  std::optional<DomainDataset> held_out;
  const auto data = training_domains(c, load_data(c), &held_out);
  std::optional<TransformModelParams> transform;
  if (mode_uses_transform(c.fedora.mode)) {
    const auto tpath = c.resolved_transform_checkpoint();
    if (!std::filesystem::exists(tpath)) {
      throw MissingInput("transform checkpoint " + tpath.string() + " not found (run train-transform first)");
    }
    transform = load_transform_checkpoint(tpath);
  }
  FedoraConfig fc = c.fedora;
  fc.seed = derive_seed(c.seed, "fedora");
  const auto result = train_fedora(transform ? &*transform : nullptr, data, fc);
  const auto path = c.resolved_classifier_checkpoint();
  save_classifier(result.params, fc, path);
  write_trace_csv(std::span<const FedoraTraceRow>(result.trace), path.parent_path() / "trace.csv");
  if (held_out) {
    const Batch b = to_batch(*held_out);
    const auto scores = predict_scores(result.params, b.features);
    const auto report = evaluate_predictions(held_out->domain_id, b.labels, hard_labels(scores), scores, b.sensitive);
    write_json(path.parent_path() / ("holdout_" + held_out->domain_id + ".json"), to_json(report));
    std::cout << "holdout " << held_out->domain_id << ": accuracy " << report.accuracy << ", dp_ratio "
              << report.dp_ratio << '\n';
  }
  std::cout << "classifier " << path.string() << " (lambda1 " << result.final_state.lambda1 << ", lambda2 "
            << result.final_state.lambda2 << ")\n";
}

void cmd_eval(const RunConfig& c) {
  const auto plan = make_plan(c, load_data(c));
  const auto result = leave_one_domain_out(plan);
  emit_report(result, c.out, c.experiment);
  emit_plots(result, c.out, c.experiment);
  for (const auto& f : result.folds) {
    std::cout << f.target_domain << ": accuracy " << f.accuracy << ", dp_ratio " << f.dp_ratio << ", rho " << f.rho
              << (f.failure ? " (" + *f.failure + ")" : std::string{}) << '\n';
  }
  std::cout << "average: accuracy " << result.average.accuracy << ", dp_ratio " << result.average.dp_ratio << '\n';
}

void cmd_sweep(const RunConfig& c) {
  const auto plan = make_plan(c, load_data(c));
  const auto sweep = sweep_lambda2(plan, c.sweep);
  for (std::size_t k = 0; k < sweep.rows.size(); ++k) {
    emit_report(sweep.runs[k], c.out, c.experiment + "_lambda2_" + format_double(sweep.rows[k].lambda2));
  }
  emit_sweep(sweep, c.out, c.experiment);
  for (const auto& r : sweep.rows) {
    std::cout << "lambda2 " << r.lambda2 << ": accuracy " << r.accuracy << ", dp_ratio " << r.dp_ratio << '\n';
  }
}

int cmd_audit_bound(const RunConfig& c) {
  const auto summary = audit_random_triples(c.audit_triples, c.audit_cells, c.seed);
  nlohmann::json j;
  j["triples"] = summary.triples;
  j["cells"] = c.audit_cells;
  j["checks"] = summary.checks;
  j["violations"] = summary.violations;
  j["min_slack"] = summary.min_slack;
  j["details"] = summary.details;
  write_json(c.out / "reports" / "audit" / "bound_audit.json", j);
  std::cout << summary.checks << " checks, " << summary.violations << " violations, min slack " << summary.min_slack
            << '\n';
  if (summary.violations > 0) {
    std::cerr << "fedora: error: fairness bound violated in " << summary.violations << " cases\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware domain generalization toolkit"};
  app.require_subcommand(1);
  Overrides overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", overrides.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { overrides.seed = v; }, "Base seed");
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { overrides.out = v; }, "Output directory");
    sub->add_option_function<std::string>("--mode", [&](const std::string& v) { overrides.mode = v; }, "Training mode")
        ->check(CLI::IsMember({"full", "no-ea", "no-t", "no-lfair"}));
    return sub;
  };
  auto* gen = add_common(app.add_subcommand("gen", "Generate the synthetic benchmark"));
  auto* train_t = add_common(app.add_subcommand("train-transform", "Train the transformation model"));
  auto* train = add_common(app.add_subcommand("train", "Train the classifier"));
  auto* eval = add_common(app.add_subcommand("eval", "Leave-one-domain-out evaluation"));
  auto* sweep = add_common(app.add_subcommand("sweep", "Fairness weight sweep"));
  auto* audit = add_common(app.add_subcommand("audit-bound", "Audit the fairness upper bound"));

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = resolve(overrides);
    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    write_manifest(config, name);
    if (chosen == gen) cmd_gen(config);
    else if (chosen == train_t) cmd_train_transform(config);
    else if (chosen == train) cmd_train(config);
    else if (chosen == eval) cmd_eval(config);
    else if (chosen == sweep) cmd_sweep(config);
    else if (chosen == audit) return cmd_audit_bound(config);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fedora: error: " << e.what() << '\n';
    return 1;
  }
}
