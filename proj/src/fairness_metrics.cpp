#include "fedora/fairness_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "fedora/errors.hpp"

namespace fedora {

double group_gap(double prediction, int sensitive, double p1) {
  if (!(p1 > 0.0 && p1 < 1.0)) {
    throw DegenerateGroup("group_gap: p1 must lie strictly between 0 and 1");
  }
  const double indicator = (sensitive + 1) / 2.0;
  return (indicator - p1) * prediction / (p1 * (1.0 - p1));
}

double positive_group_fraction(std::span<const int> sensitives) {
  if (sensitives.empty()) return 0.0;
  const auto positives = std::count_if(sensitives.begin(), sensitives.end(), [](int z) { return z > 0; });
  return static_cast<double>(positives) / static_cast<double>(sensitives.size());
}

namespace {

void require_groups(std::size_t n_pred, std::span<const int> sensitives, const char* who) {
  if (n_pred != sensitives.size()) {
    throw LengthMismatch(std::string(who) + ": predictions and sensitives differ in length");
  }
  const auto positives = std::count_if(sensitives.begin(), sensitives.end(), [](int z) { return z > 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == sensitives.size()) {
    throw EmptyGroup(std::string(who) + ": both sensitive groups must be present");
  }
}

}  // namespace

double rho(std::span<const double> predictions, std::span<const int> sensitives) {
  require_groups(predictions.size(), sensitives, "rho");
  const double p1 = positive_group_fraction(sensitives);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += group_gap(predictions[i], sensitives[i], p1);
  return std::abs(sum / static_cast<double>(predictions.size()));
}

double dp_ratio(std::span<const int> binary_predictions, std::span<const int> sensitives) {
  require_groups(binary_predictions.size(), sensitives, "dp_ratio");
  double n_pos = 0, n_neg = 0, hit_pos = 0, hit_neg = 0;
  for (std::size_t i = 0; i < sensitives.size(); ++i) {
    if (sensitives[i] > 0) {
      n_pos += 1;
      hit_pos += binary_predictions[i] != 0 ? 1 : 0;
    } else {
      n_neg += 1;
      hit_neg += binary_predictions[i] != 0 ? 1 : 0;
    }
  }
  const double rate_pos = hit_pos / n_pos;
  const double rate_neg = hit_neg / n_neg;
  if (rate_pos == 0.0 && rate_neg == 0.0) return 1.0;
  if (rate_pos == 0.0 || rate_neg == 0.0) return 0.0;
  const double k = rate_neg / rate_pos;
  return std::min(k, 1.0 / k);
}

double auc_fair(std::span<const double> scores, std::span<const int> sensitives) {
  require_groups(scores.size(), sensitives, "auc_fair");
  std::vector<double> positive_scores;
  std::vector<double> negative_scores;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (sensitives[i] > 0 ? positive_scores : negative_scores).push_back(scores[i]);
  }
  std::sort(positive_scores.begin(), positive_scores.end());
  double wins = 0.0;
  for (double s : negative_scores) {
    const auto lower = std::lower_bound(positive_scores.begin(), positive_scores.end(), s);
    const auto upper = std::upper_bound(lower, positive_scores.end(), s);
    wins += static_cast<double>(lower - positive_scores.begin()) +
            0.5 * static_cast<double>(upper - lower);
  }
  return wins / (static_cast<double>(negative_scores.size()) *
                 static_cast<double>(positive_scores.size()));
}

void DiscreteJoint::validate() const {
  if (static_cast<Index>(support.size()) != probabilities.size()) {
    throw ValueError("DiscreteJoint: support and probabilities differ in length");
  }
  if ((probabilities.array() < 0.0).any()) throw ValueError("DiscreteJoint: negative probability");
  if (std::abs(probabilities.sum() - 1.0) > 1e-12) {
    throw ValueError("DiscreteJoint: probabilities do not sum to 1");
  }
  auto sorted = support;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValueError("DiscreteJoint: repeated atom");
  }
}

double DiscreteJoint::probability_of(const Atom& atom) const {
  double total = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i] == atom) total += probabilities[static_cast<Index>(i)];
  }
  return total;
}

double js_distance(const DiscreteJoint& p, const DiscreteJoint& q) {
  std::map<DiscreteJoint::Atom, std::pair<double, double>> merged;
  for (std::size_t i = 0; i < p.support.size(); ++i) merged[p.support[i]].first += p.probabilities[static_cast<Index>(i)];
  for (std::size_t i = 0; i < q.support.size(); ++i) merged[q.support[i]].second += q.probabilities[static_cast<Index>(i)];
  double divergence = 0.0;
  for (const auto& [atom, pq] : merged) {
    const auto [pa, qa] = pq;
    const double m = 0.5 * (pa + qa);
    if (pa > 0) divergence += 0.5 * pa * std::log(pa / m);
    if (qa > 0) divergence += 0.5 * qa * std::log(qa / m);
  }
  return std::sqrt(std::max(divergence, 0.0));
}

double joint_rho(const DiscreteJoint& joint, const std::function<int(int)>& classifier) {
  double p1 = 0.0;
  for (std::size_t i = 0; i < joint.support.size(); ++i) {
    if (joint.support[i].sensitive > 0) p1 += joint.probabilities[static_cast<Index>(i)];
  }
  if (!(p1 > 0.0 && p1 < 1.0)) throw EmptyGroup("joint_rho: a sensitive group has zero mass");
  double expectation = 0.0;
  for (std::size_t i = 0; i < joint.support.size(); ++i) {
    const auto& atom = joint.support[i];
    expectation += joint.probabilities[static_cast<Index>(i)] *
                   group_gap(classifier(atom.cell), atom.sensitive, p1);
  }
  return std::abs(expectation);
}

double joint_dependence_score(const DiscreteJoint& joint) {
  double mass_pos = 0, mass_neg = 0, hit_pos = 0, hit_neg = 0;
  for (std::size_t i = 0; i < joint.support.size(); ++i) {
    const double p = joint.probabilities[static_cast<Index>(i)];
    const auto& atom = joint.support[i];
    if (atom.sensitive > 0) {
      mass_pos += p;
      hit_pos += atom.label * p;
    } else {
      mass_neg += p;
      hit_neg += atom.label * p;
    }
  }
  if (mass_pos <= 0 || mass_neg <= 0) throw EmptyGroup("joint_dependence_score: empty group");
  return std::abs(hit_pos / mass_pos - hit_neg / mass_neg);
}

double fairness_upper_bound(std::span<const double> source_rhos,
                            std::span<const DiscreteJoint> source_joints,
                            const DiscreteJoint& target_joint) {
  if (source_joints.empty()) throw EmptySources("fairness_upper_bound: no source domains");
  if (source_rhos.size() != source_joints.size()) {
    throw LengthMismatch("fairness_upper_bound: rho and joint lists differ in length");
  }
  double mean_rho = 0.0;
  for (double r : source_rhos) mean_rho += r;
  mean_rho /= static_cast<double>(source_rhos.size());

  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& s : source_joints) nearest = std::min(nearest, js_distance(target_joint, s));
  double widest = 0.0;
  for (std::size_t i = 0; i < source_joints.size(); ++i) {
    for (std::size_t j = i + 1; j < source_joints.size(); ++j) {
      widest = std::max(widest, js_distance(source_joints[i], source_joints[j]));
    }
  }
  return mean_rho + std::numbers::sqrt2 * nearest + std::numbers::sqrt2 * widest;
}

MetricsReport evaluate_predictions(std::string target_domain, std::span<const int> labels,
                                   std::span<const int> hard_predictions,
                                   std::span<const double> scores,
                                   std::span<const int> sensitives) {
  if (labels.size() != hard_predictions.size() || labels.size() != scores.size() ||
      labels.size() != sensitives.size()) {
    throw LengthMismatch("evaluate_predictions: inputs differ in length");
  }
  MetricsReport report;
  report.target_domain = std::move(target_domain);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == hard_predictions[i] ? 1 : 0;
  report.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  std::vector<double> hard(hard_predictions.begin(), hard_predictions.end());
  report.rho = rho(hard, sensitives);
  report.dp_ratio = dp_ratio(hard_predictions, sensitives);
  report.auc_fair = auc_fair(scores, sensitives);
  return report;
}

MetricsReport aggregate(std::string target_domain, std::span<const MetricsReport> reports) {
  MetricsReport out;
  out.target_domain = std::move(target_domain);
  std::vector<const MetricsReport*> ok;
  for (const auto& r : reports) {
    if (!r.failure) ok.push_back(&r);
  }
  out.repeats = static_cast<int>(ok.size());
  if (ok.empty()) {
    out.failure = "no successful runs";
    return out;
  }
  auto stats = [&](auto field, double& mean, double& sd) {
    mean = 0.0;
    for (const auto* r : ok) mean += r->*field;
    mean /= static_cast<double>(ok.size());
    sd = 0.0;
    if (ok.size() > 1) {
      for (const auto* r : ok) sd += (r->*field - mean) * (r->*field - mean);
      sd = std::sqrt(sd / static_cast<double>(ok.size() - 1));
    }
  };
  stats(&MetricsReport::accuracy, out.accuracy, out.accuracy_std);
  stats(&MetricsReport::rho, out.rho, out.rho_std);
  stats(&MetricsReport::dp_ratio, out.dp_ratio, out.dp_ratio_std);
  stats(&MetricsReport::auc_fair, out.auc_fair, out.auc_fair_std);
  if (ok.size() != reports.size()) {
    out.failure = std::to_string(reports.size() - ok.size()) + " of " +
                  std::to_string(reports.size()) + " runs failed";
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["target_domain"] = report.target_domain;
  j["accuracy"] = report.accuracy;
  j["rho"] = report.rho;
  j["dp_ratio"] = report.dp_ratio;
  j["auc_fair"] = report.auc_fair;
  j["accuracy_std"] = report.accuracy_std;
  j["rho_std"] = report.rho_std;
  j["dp_ratio_std"] = report.dp_ratio_std;
  j["auc_fair_std"] = report.auc_fair_std;
  j["repeats"] = report.repeats;
  j["failure"] = report.failure ? nlohmann::json(*report.failure) : nlohmann::json(nullptr);
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.target_domain = j.at("target_domain").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.rho = j.at("rho").get<double>();
  r.dp_ratio = j.at("dp_ratio").get<double>();
  r.auc_fair = j.at("auc_fair").get<double>();
  r.accuracy_std = j.value("accuracy_std", 0.0);
  r.rho_std = j.value("rho_std", 0.0);
  r.dp_ratio_std = j.value("dp_ratio_std", 0.0);
  r.auc_fair_std = j.value("auc_fair_std", 0.0);
  r.repeats = j.value("repeats", 1);
  if (j.contains("failure") && !j["failure"].is_null()) r.failure = j["failure"].get<std::string>();
  return r;
}

}  // namespace fedora
