#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fedora/errors.hpp"
#include "fedora/fairness_metrics.hpp"

using namespace fedora;

namespace {

// Brute-force positive-rate difference.
double rate_gap(const std::vector<double>& yhat, const std::vector<int>& z) {
  double pos = 0, neg = 0, npos = 0, nneg = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] > 0) pos += yhat[i], ++npos;
    else neg += yhat[i], ++nneg;
  }
  return std::abs(pos / npos - neg / nneg);
}

double auc_by_pairs(const std::vector<double>& s, const std::vector<int>& z) {
  double total = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (z[i] != -1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (z[j] != 1) continue;
      total += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      ++pairs;
    }
  }
  return total / pairs;
}

DiscreteJoint point_mass(int cell) {
  DiscreteJoint j;
  j.support = {{cell, 1, 1}};
  j.probabilities = Vector::Ones(1);
  return j;
}

DiscreteJoint random_joint(std::mt19937_64& rng, int cells) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DiscreteJoint j;
  std::vector<double> p;
  for (int c = 0; c < cells; ++c) {
    for (int z : {-1, 1}) {
      for (int y : {0, 1}) {
        j.support.push_back({c, z, y});
        p.push_back(u(rng));
      }
    }
  }
  j.probabilities = Eigen::Map<Vector>(p.data(), static_cast<Index>(p.size()));
  j.probabilities /= j.probabilities.sum();
  return j;
}

}  // namespace

TEST_CASE("group gap values") {
  CHECK(group_gap(1, 1, 0.5) == 2.0);
  CHECK(group_gap(0, -1, 0.3) == 0.0);
  CHECK(group_gap(1, -1, 0.25) == doctest::Approx(-4.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(group_gap(1, 1, 0.0), DegenerateGroup);
  CHECK_THROWS_AS(group_gap(1, 1, 1.0), DegenerateGroup);
}

TEST_CASE("rho examples") {
  const std::vector<int> z{1, 1, -1, -1};
  CHECK(rho(std::vector<double>{1, 0, 0, 0}, z) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rho(std::vector<double>{1, 0, 1, 0}, z) == 0.0);
  CHECK(rho(std::vector<double>{1, 1, 0, 0}, z) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rho(std::vector<double>{1, 0}, std::vector<int>{1, 1}), EmptyGroup);
  CHECK_THROWS_AS(rho(std::vector<double>{1, 0}, z), LengthMismatch);
}

TEST_CASE("rho equals the positive-rate gap on random binary data") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(4, 200);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    std::vector<double> yhat(n);
    std::vector<int> z(n);
    for (int i = 0; i < n; ++i) {
      yhat[i] = coin(rng) ? 1 : 0;
      z[i] = coin(rng) ? 1 : -1;
    }
    z[0] = 1;
    z[1] = -1;
    CHECK(std::abs(rho(yhat, z) - rate_gap(yhat, z)) <= 1e-12);
  }
}

TEST_CASE("dp ratio") {
  // rates 0.3 and 0.3
  std::vector<int> z, yhat;
  for (int i = 0; i < 10; ++i) {
    z.push_back(1), yhat.push_back(i < 3);
    z.push_back(-1), yhat.push_back(i < 3);
  }
  CHECK(dp_ratio(yhat, z) == 1.0);
  // 0.2 for z = -1 and 0.4 for z = +1
  z.clear(), yhat.clear();
  for (int i = 0; i < 10; ++i) {
    z.push_back(-1), yhat.push_back(i < 2);
    z.push_back(1), yhat.push_back(i < 4);
  }
  CHECK(dp_ratio(yhat, z) == doctest::Approx(0.5).epsilon(1e-15));
  for (auto& v : yhat) v = 0;
  CHECK(dp_ratio(yhat, z) == 1.0);
  for (std::size_t i = 0; i < z.size(); ++i) yhat[i] = z[i] > 0 && i % 4 == 1;
  CHECK(dp_ratio(yhat, z) == 0.0);
}

TEST_CASE("auc fair") {
  CHECK(auc_fair(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{-1, -1, 1, 1}) == 1.0);
  CHECK(auc_fair(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{1, 1, -1, -1}) == 0.0);
  CHECK(auc_fair(std::vector<double>{0.3, 0.7, 0.3, 0.7}, std::vector<int>{-1, -1, 1, 1}) == 0.5);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(30);
    std::vector<int> z(30), flipped(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = level(rng) / 5.0;  // coarse levels force ties
      z[i] = coin(rng) ? 1 : -1;
      flipped[i] = -z[i];
    }
    z[0] = 1, z[1] = -1, flipped[0] = -1, flipped[1] = 1;
    CHECK(auc_fair(s, z) == doctest::Approx(auc_by_pairs(s, z)).epsilon(1e-14));
    CHECK(auc_fair(s, z) + auc_fair(s, flipped) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("jensen-shannon distance") {
  std::mt19937_64 rng(9);
  const auto p = random_joint(rng, 3);
  const auto q = random_joint(rng, 3);
  CHECK(js_distance(p, p) == 0.0);
  CHECK(js_distance(p, q) == doctest::Approx(js_distance(q, p)).epsilon(1e-15));
  CHECK(js_distance(point_mass(0), point_mass(1)) == doctest::Approx(std::sqrt(std::numbers::ln2)).epsilon(1e-15));
  CHECK(std::sqrt(std::numbers::ln2) == doctest::Approx(0.832555).epsilon(1e-6));
  // bounded by the disjoint-support value
  CHECK(js_distance(p, q) <= std::sqrt(std::numbers::ln2));
}

TEST_CASE("discrete joint validation") {
  std::mt19937_64 rng(1);
  auto j = random_joint(rng, 2);
  CHECK_NOTHROW(j.validate());
  j.probabilities[0] += 0.1;
  CHECK_THROWS_AS(j.validate(), ValueError);
  j = random_joint(rng, 2);
  j.support[1] = j.support[0];
  CHECK_THROWS_AS(j.validate(), ValueError);
}

TEST_CASE("fairness upper bound") {
  std::mt19937_64 rng(4);
  const auto t = random_joint(rng, 4);
  const std::vector<DiscreteJoint> one{t};
  CHECK(fairness_upper_bound(std::vector<double>{0.3}, one, t) == doctest::Approx(0.3).epsilon(1e-15));
  const std::vector<DiscreteJoint> two{t, t};
  CHECK(fairness_upper_bound(std::vector<double>{0.2, 0.4}, two, t) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(fairness_upper_bound(std::vector<double>{}, std::vector<DiscreteJoint>{}, t), EmptySources);
  CHECK_THROWS_AS(fairness_upper_bound(std::vector<double>{0.1}, two, t), LengthMismatch);

  // two distinct sources: bound dominates every deterministic classifier
  const std::vector<DiscreteJoint> sources{random_joint(rng, 4), random_joint(rng, 4)};
  for (unsigned mask = 0; mask < 16; ++mask) {
    auto f = [mask](int cell) { return static_cast<int>((mask >> cell) & 1u); };
    const std::vector<double> rhos{joint_rho(sources[0], f), joint_rho(sources[1], f)};
    CHECK(joint_rho(t, f) <= fairness_upper_bound(rhos, sources, t) + 1e-9);
  }
}

TEST_CASE("joint dependence and rho") {
  DiscreteJoint j;
  j.support = {{0, 1, 1}, {0, -1, 0}};
  j.probabilities = Vector::Constant(2, 0.5);
  CHECK(joint_dependence_score(j) == 1.0);
  CHECK(joint_rho(j, [](int) { return 1; }) == 0.0);
  j.support = {{0, 1, 1}, {1, -1, 0}};
  CHECK(joint_rho(j, [](int c) { return c == 0 ? 1 : 0; }) == doctest::Approx(1.0));
}

TEST_CASE("evaluate and aggregate") {
  const std::vector<int> labels{1, 0, 1, 0}, z{1, 1, -1, -1}, hard{1, 0, 0, 0};
  const std::vector<double> scores{0.9, 0.2, 0.4, 0.1};
  const auto r = evaluate_predictions("t", labels, hard, scores, z);
  CHECK(r.accuracy == 0.75);
  CHECK(r.rho == doctest::Approx(0.5));
  CHECK(r.dp_ratio == 0.0);
  CHECK(r.auc_fair == auc_by_pairs(scores, z));

  MetricsReport a = r, b = r, failed;
  b.accuracy = 0.25;
  failed.failure = "boom";
  const std::vector<MetricsReport> runs{a, b, failed};
  const auto agg = aggregate("t", runs);
  CHECK(agg.accuracy == 0.5);
  CHECK(agg.accuracy_std == doctest::Approx(std::sqrt(0.125)));
  CHECK(agg.repeats == 2);
  CHECK(agg.failure.has_value());

  const auto back = report_from_json(to_json(agg));
  CHECK(back.accuracy == agg.accuracy);
  CHECK(back.accuracy_std == agg.accuracy_std);
  CHECK(back.failure == agg.failure);
  CHECK(back.repeats == agg.repeats);
}
