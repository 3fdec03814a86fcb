#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedora/types.hpp"

namespace fedora {

/// Linear surrogate of the demographic-parity gap for one prediction:
///   (1 / (p1 (1 - p1))) * ((z + 1) / 2 - p1) * prediction.
/// Throws DegenerateGroup unless 0 < p1 < 1.
double group_gap(double prediction, int sensitive, double p1);

/// Fraction of z = +1 entries.
double positive_group_fraction(std::span<const int> sensitives);

/// |mean group_gap| with p1 the empirical fraction of z = +1. Accepts soft
/// scores or hard labels. Throws EmptyGroup / LengthMismatch.
double rho(std::span<const double> predictions, std::span<const int> sensitives);

/// min(k, 1/k) with k = P(yhat=1 | z=-1) / P(yhat=1 | z=+1); 1 when both
/// rates are zero, 0 when exactly one is.
double dp_ratio(std::span<const int> binary_predictions, std::span<const int> sensitives);

/// Mann-Whitney statistic of scores of group z=-1 against group z=+1, ties
/// counted as 1/2.
double auc_fair(std::span<const double> scores, std::span<const int> sensitives);

/// Finite joint distribution over (x-cell, z, y) atoms.
struct DiscreteJoint {
  struct Atom {
    int cell = 0;
    int sensitive = 1;
    int label = 0;
    friend bool operator==(const Atom&, const Atom&) = default;
    friend auto operator<=>(const Atom&, const Atom&) = default;
  };
  std::vector<Atom> support;
  Vector probabilities;

  /// Throws ValueError if probabilities are negative or do not sum to 1
  /// within 1e-12, or if atoms repeat.
  void validate() const;
  double probability_of(const Atom& atom) const;
};

/// Jensen-Shannon distance in nats: sqrt(KL(p||m)/2 + KL(q||m)/2), m the
/// midpoint, over the union of both supports.
double js_distance(const DiscreteJoint& p, const DiscreteJoint& q);

/// Dependence of a cell classifier on a discrete domain:
/// |E g(f(cell), z)| with p1 = P(Z = 1) of that joint.
double joint_rho(const DiscreteJoint& joint, const std::function<int(int)>& classifier);

/// Label dependence |P(Y=1|Z=1) - P(Y=1|Z=-1)| of a discrete joint.
double joint_dependence_score(const DiscreteJoint& joint);

/// mean(source_rhos) + sqrt2 * min_i JS(target, source_i)
///                   + sqrt2 * max_{i,j} JS(source_i, source_j).
double fairness_upper_bound(std::span<const double> source_rhos,
                            std::span<const DiscreteJoint> source_joints,
                            const DiscreteJoint& target_joint);

struct MetricsReport {
  std::string target_domain;
  double accuracy = 0;
  double rho = 0;
  double dp_ratio = 0;
  double auc_fair = 0;
  // spread over reseeded repeats; zero with a single repeat
  double accuracy_std = 0;
  double rho_std = 0;
  double dp_ratio_std = 0;
  double auc_fair_std = 0;
  int repeats = 1;
  std::optional<std::string> failure;
};

/// Hard-label accuracy, hard-label rho and dp_ratio, score-based auc_fair.
MetricsReport evaluate_predictions(std::string target_domain, std::span<const int> labels,
                                   std::span<const int> hard_predictions,
                                   std::span<const double> scores,
                                   std::span<const int> sensitives);

/// Mean and sample standard deviation over repeats; failed entries are skipped.
MetricsReport aggregate(std::string target_domain, std::span<const MetricsReport> reports);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace fedora
