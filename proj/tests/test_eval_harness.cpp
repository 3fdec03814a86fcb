#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fedora/errors.hpp"
#include "fedora/eval_harness.hpp"
#include "fedora/synthdata.hpp"
#include "test_support.hpp"

using namespace fedora;

namespace {

DiscreteJoint two_cell_joint(double p_pos_y1, double p_neg_y1) {
  // cell == label; half the mass in each sensitive group
  DiscreteJoint j;
  j.support = {{0, 1, 0}, {1, 1, 1}, {0, -1, 0}, {1, -1, 1}};
  j.probabilities.resize(4);
  j.probabilities << 0.5 * (1 - p_pos_y1), 0.5 * p_pos_y1, 0.5 * (1 - p_neg_y1), 0.5 * p_neg_y1;
  return j;
}

ExperimentPlan tiny_plan(int repeats) {
  ExperimentPlan plan;
  plan.datasets = gen_benchmark(default_benchmark(300, 9));
  plan.repeats = repeats;
  plan.transform.iterations = 20;
  plan.transform.batch_size = 32;
  plan.transform.shape.dim_m = 6;
  plan.transform.shape.dim_c = 3;
  plan.fedora.iterations = 40;
  plan.fedora.batch_size = 32;
  plan.fedora.hidden = {8};
  plan.checkpoints = 4;
  plan.seed = 5;
  return plan;
}

const LodoResult& tiny_lodo() {
  static const LodoResult result = leave_one_domain_out(tiny_plan(3));
  return result;
}

}  // namespace

TEST_CASE("spearman rank correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  CHECK(spearman(a, std::vector<double>{10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(spearman(a, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(a, std::vector<double>{1, 1, 1, 1, 1}) == 0.0);
  // ties take average ranks: ranks (1.5, 1.5, 3) against (1, 2, 3)
  CHECK(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}) ==
        doctest::Approx(std::sqrt(3.0) / 2).epsilon(1e-12));
  CHECK(spearman(a, std::vector<double>{1, 3, 2, 5, 4}) == doctest::Approx(0.8));
}

TEST_CASE("bound audit") {
  const auto src = two_cell_joint(0.7, 0.3);
  const std::vector<DiscreteJoint> same{src, src};
  const auto identity = [](int cell) { return cell; };

  SUBCASE("identical domains: bound equals the source rho") {
    const auto audit = bound_audit(same, src, identity);
    CHECK(audit.bound == doctest::Approx(joint_rho(src, identity)).epsilon(1e-12));
    CHECK(audit.rho_target == doctest::Approx(audit.bound).epsilon(1e-12));
    CHECK(audit.satisfied);
  }
  SUBCASE("constant classifier has zero target rho") {
    const auto audit = bound_audit(same, two_cell_joint(0.9, 0.1), [](int) { return 1; });
    CHECK(audit.rho_target == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(audit.satisfied);
  }
  SUBCASE("random triples hold the bound") {
    const auto summary = audit_random_triples(3, 4, 17);
    CHECK(summary.triples == 3);
    CHECK(summary.checks == 3 * 3 * 16);
    CHECK(summary.violations == 0);
    CHECK(summary.min_slack >= -1e-9);
    CHECK(audit_random_triples(3, 4, 17).details == summary.details);
  }
  CHECK_THROWS(bound_audit(std::vector<DiscreteJoint>{}, src, identity));
}

TEST_CASE("fold seeds depend only on target and repeat") {
  CHECK(fold_seed(1, "R", 0) == fold_seed(1, "R", 0));
  CHECK(fold_seed(1, "R", 0) != fold_seed(1, "R", 1));
  CHECK(fold_seed(1, "R", 0) != fold_seed(1, "G", 0));
  CHECK(fold_seed(1, "R", 0) != fold_seed(2, "R", 0));
}

TEST_CASE("leave one domain out") {
  const auto& result = tiny_lodo();
  REQUIRE(result.folds.size() == 3);
  CHECK(result.runs.size() == 9);
  CHECK(result.folds[0].target_domain == "R");
  CHECK(result.folds[2].target_domain == "B");
  double acc = 0, dp = 0, r = 0;
  for (const auto& f : result.folds) {
    CHECK_FALSE(f.failure.has_value());
    CHECK(f.repeats == 3);
    acc += f.accuracy;
    dp += f.dp_ratio;
    r += f.rho;
  }
  CHECK(result.average.accuracy == doctest::Approx(acc / 3).epsilon(1e-12));
  CHECK(result.average.dp_ratio == doctest::Approx(dp / 3).epsilon(1e-12));
  CHECK(result.average.rho == doctest::Approx(r / 3).epsilon(1e-12));
  CHECK(result.average.accuracy_std > 0.0);
  for (const auto& run : result.runs) {
    CHECK(run.selected_iteration > 0);
    CHECK(run.selected_iteration <= 40);
    CHECK(run.trace.size() == 40);
  }

  SUBCASE("fold results do not depend on domain order") {
    auto plan = tiny_plan(1);
    const auto forward = leave_one_domain_out(plan);
    std::reverse(plan.datasets.begin(), plan.datasets.end());
    const auto backward = leave_one_domain_out(plan);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(forward.folds[k].target_domain == backward.folds[2 - k].target_domain);
      CHECK(forward.folds[k].accuracy == backward.folds[2 - k].accuracy);
      CHECK(forward.folds[k].rho == backward.folds[2 - k].rho);
    }
  }
  SUBCASE("cache reuse gives the same result") {
    TransformCache cache;
    const auto plan = tiny_plan(1);
    const auto a = leave_one_domain_out(plan, &cache);
    CHECK(cache.size() == 3);
    const auto b = leave_one_domain_out(plan, &cache);
    CHECK(cache.size() == 3);
    CHECK(a.average.accuracy == b.average.accuracy);
  }
}

TEST_CASE("unsplittable domains are rejected") {
  auto plan = tiny_plan(1);
  plan.datasets[1].examples.resize(6);
  CHECK_THROWS_AS(leave_one_domain_out(plan), TooSmall);
}

TEST_CASE("diverging runs are recorded as failures") {
  auto plan = tiny_plan(1);
  plan.mode = TrainMode::ablate_no_T;
  plan.fedora.initial.eta_primal = 1e300;
  const auto result = leave_one_domain_out(plan);
  REQUIRE(result.folds.size() == 3);
  for (const auto& f : result.folds) CHECK(f.failure.has_value());
  CHECK(result.average.failure.has_value());
}

TEST_CASE("report emission") {
  const auto& result = tiny_lodo();
  testing::TempDir a("emit_a"), b("emit_b");
  emit_report(result, a.path(), "toy");
  emit_report(result, b.path(), "toy");
  for (const char* rel : {"reports/toy/average.json", "reports/toy/fold_R.json", "reports/toy/fold_G.json",
                          "reports/toy/fold_B.json", "traces/toy/fold_R.csv"}) {
    CAPTURE(rel);
    REQUIRE(std::filesystem::exists(a.path() / rel));
    CHECK(testing::slurp(a.path() / rel) == testing::slurp(b.path() / rel));
  }
  const auto avg = nlohmann::json::parse(testing::slurp(a.path() / "reports/toy/average.json"));
  CHECK(avg["average"]["accuracy"].get<double>() == result.average.accuracy);
  CHECK(avg["folds"].size() == 3);
  const auto fold = nlohmann::json::parse(testing::slurp(a.path() / "reports/toy/fold_G.json"));
  CHECK(fold["runs"].size() == 3);

  emit_plots(result, a.path(), "toy");
  for (const char* rel : {"plots/toy/fold_R_losses.png", "plots/toy/fold_B_multipliers.png"}) {
    CAPTURE(rel);
    const auto bytes = testing::slurp(a.path() / rel);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  }
}

TEST_CASE("lambda2 sweep") {
  auto plan = tiny_plan(1);
  TransformCache cache;
  const std::vector<double> values{0.01, 1.0, 10.0};
  const auto sweep = sweep_lambda2(plan, values, &cache);
  REQUIRE(sweep.rows.size() == 3);
  CHECK(cache.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(sweep.rows[k].lambda2 == values[k]);
    CHECK(sweep.rows[k].accuracy == sweep.runs[k].average.accuracy);
    for (const auto& run : sweep.runs[k].runs) {
      for (const auto& row : run.trace) CHECK(row.lambda2 == values[k]);
    }
  }
  testing::TempDir dir("sweep");
  emit_sweep(sweep, dir.path(), "toy");
  const auto csv = testing::slurp(dir.path() / "reports/toy/sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("lambda2,accuracy,dp_ratio,rho,auc_fair\n", 0) == 0);
  const auto j = nlohmann::json::parse(testing::slurp(dir.path() / "reports/toy/sweep.json"));
  CHECK(j.contains("spearman_lambda2_dp_ratio"));
  CHECK(std::filesystem::file_size(dir.path() / "plots/toy/tradeoff.png") > 0);
  CHECK_THROWS_AS(sweep_lambda2(plan, std::vector<double>{-1.0}), ValueError);
}
