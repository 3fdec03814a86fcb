#include "fedora/synthdata.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fedora/errors.hpp"

namespace fedora {

void SyntheticDomainSpec::validate() const {
  const Index d = dim();
  if (!(target_rho >= 0.0 && target_rho <= 1.0)) {
    throw InvalidSpec("domain '" + domain_id + "': target_rho must lie in [0,1]");
  }
  if (n_examples < 4) throw InvalidSpec("domain '" + domain_id + "': need at least 4 examples");
  if (d == 0 || semantic.class1_mean.size() != d) {
    throw InvalidSpec("domain '" + domain_id + "': class means must share a positive dimension");
  }
  if (sensitive_effect.size() != d || style.shift.size() != d) {
    throw InvalidSpec("domain '" + domain_id + "': effect and style shift must match dimension");
  }
  if (!(semantic.noise_std > 0.0) || !(style.scale != 0.0) || !std::isfinite(style.angle) ||
      !std::isfinite(style.scale)) {
    throw InvalidSpec("domain '" + domain_id + "': noise_std > 0 and finite non-zero scale required");
  }
  if (d < 2 && style.angle != 0.0) {
    throw InvalidSpec("domain '" + domain_id + "': rotation needs at least two features");
  }
}

Vector apply_style(const StyleTransform& style, const Vector& u) {
  Vector x = u;
  if (u.size() >= 2) {
    const double c = std::cos(style.angle);
    const double s = std::sin(style.angle);
    x[0] = c * u[0] - s * u[1];
    x[1] = s * u[0] + c * u[1];
  }
  return style.scale * x + style.shift;
}

Vector undo_style(const StyleTransform& style, const Vector& x) {
  Vector u = (x - style.shift) / style.scale;
  if (u.size() >= 2) {
    const double c = std::cos(style.angle);
    const double s = std::sin(style.angle);
    const double u0 = c * u[0] + s * u[1];
    const double u1 = -s * u[0] + c * u[1];
    u[0] = u0;
    u[1] = u1;
  }
  return u;
}

GeneratedDomain gen_tabular_domain_detailed(const SyntheticDomainSpec& spec) {
  spec.validate();
  const Index d = spec.dim();
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);

  GeneratedDomain out;
  out.dataset.domain_id = spec.domain_id;
  out.dataset.declared_rho = spec.target_rho;
  out.dataset.examples.reserve(spec.n_examples);
  out.content.resize(d, static_cast<Index>(spec.n_examples));
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    LabeledExample ex;
    ex.sensitive = coin(rng) ? 1 : -1;
    const double p_positive = ex.sensitive > 0 ? 0.5 + spec.target_rho / 2 : 0.5 - spec.target_rho / 2;
    ex.label = std::bernoulli_distribution(p_positive)(rng) ? 1 : 0;
    const Vector& mean = ex.label == 1 ? spec.semantic.class1_mean : spec.semantic.class0_mean;
    Vector u(d);
    for (Index j = 0; j < d; ++j) u[j] = mean[j] + spec.semantic.noise_std * noise(rng);
    out.content.col(static_cast<Index>(i)) = u;
    if (ex.sensitive > 0) u += spec.sensitive_effect;
    ex.features = apply_style(spec.style, u);
    out.dataset.examples.push_back(std::move(ex));
  }
  return out;
}

DomainDataset gen_tabular_domain(const SyntheticDomainSpec& spec) {
  return gen_tabular_domain_detailed(spec).dataset;
}

SemanticModel toy_semantic_model() {
  SemanticModel model;
  model.class0_mean = Vector::Zero(8);
  model.class1_mean = Vector::Zero(8);
  model.class0_mean.head(4).setConstant(-0.6);
  model.class1_mean.head(4).setConstant(0.6);
  model.noise_std = 1.0;
  return model;
}

Vector toy_sensitive_effect() {
  Vector effect = Vector::Zero(8);
  effect.tail(4).setConstant(2.0);
  return effect;
}

std::vector<double> default_rhos() { return {0.11, 0.43, 0.87}; }

std::vector<StyleTransform> default_styles(Index dim) {
  const double tilt = std::numbers::pi / 6;
  // alternating signs move the marginals without biasing the class or
  // sensitive directions
  Vector zigzag(dim);
  for (Index j = 0; j < dim; ++j) zigzag[j] = j % 2 == 0 ? 0.5 : -0.5;
  return {
      StyleTransform{Vector::Zero(dim), 0.0, 1.0},
      StyleTransform{zigzag, tilt, 1.2},
      StyleTransform{-zigzag, -tilt, 0.8},
  };
}

BenchmarkSpec make_benchmark(std::span<const std::string> domain_ids, std::span<const double> rhos,
                             std::span<const StyleTransform> styles, std::size_t n_per_domain,
                             std::uint64_t seed, const SemanticModel& semantic,
                             const Vector& sensitive_effect) {
  if (rhos.size() != styles.size() || rhos.size() != domain_ids.size()) {
    throw InvalidSpec("make_benchmark: ids, rhos and styles must align");
  }
  BenchmarkSpec bench;
  for (std::size_t k = 0; k < rhos.size(); ++k) {
    SyntheticDomainSpec spec;
    spec.domain_id = domain_ids[k];
    spec.target_rho = rhos[k];
    spec.style = styles[k];
    spec.sensitive_effect = sensitive_effect;
    spec.n_examples = n_per_domain;
    spec.seed = derive_seed(seed, "domain/" + spec.domain_id);
    spec.semantic = semantic;
    spec.validate();
    bench.domains.push_back(std::move(spec));
  }
  return bench;
}

BenchmarkSpec default_benchmark(std::size_t n_per_domain, std::uint64_t seed) {
  const std::vector<std::string> ids{"R", "G", "B"};
  const auto rhos = default_rhos();
  const auto semantic = toy_semantic_model();
  const auto styles = default_styles(semantic.class0_mean.size());
  return make_benchmark(ids, rhos, styles, n_per_domain, seed, semantic, toy_sensitive_effect());
}

std::vector<DomainDataset> gen_benchmark(const BenchmarkSpec& spec) {
  std::vector<DomainDataset> out;
  out.reserve(spec.domains.size());
  for (const auto& d : spec.domains) out.push_back(gen_tabular_domain(d));
  return out;
}

std::vector<DomainDataset> gen_benchmark(std::span<const double> rhos,
                                         std::span<const StyleTransform> styles,
                                         std::size_t n_per_domain, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < rhos.size(); ++k) ids.push_back("d" + std::to_string(k));
  return gen_benchmark(make_benchmark(ids, rhos, styles, n_per_domain, seed, toy_semantic_model(),
                                      toy_sensitive_effect()));
}

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

}  // namespace

DiscreteJoint exact_joint(const SyntheticDomainSpec& spec, const Discretization& disc) {
  spec.validate();
  const Index d = spec.dim();
  if (disc.feature < 0 || disc.feature >= d) throw InvalidSpec("exact_joint: feature index out of range");
  if (disc.cells() > 16) throw InvalidSpec("exact_joint: at most 16 feature cells");
  for (std::size_t k = 0; k < disc.edges.size(); ++k) {
    if (!std::isfinite(disc.edges[k]) || (k > 0 && !(disc.edges[k] > disc.edges[k - 1]))) {
      throw InvalidSpec("exact_joint: edges must be finite and strictly increasing");
    }
  }

  // Row `feature` of the style map applied to the content vector.
  Vector row = Vector::Zero(d);
  row[disc.feature] = 1.0;
  if (d >= 2 && disc.feature < 2) {
    const double c = std::cos(spec.style.angle);
    const double s = std::sin(spec.style.angle);
    row[0] = disc.feature == 0 ? c : s;
    row[1] = disc.feature == 0 ? -s : c;
  }
  row *= spec.style.scale;
  const double sd = std::abs(spec.style.scale) * spec.semantic.noise_std;

  DiscreteJoint joint;
  std::vector<double> probs;
  for (int z : {-1, 1}) {
    const double p_positive = z > 0 ? 0.5 + spec.target_rho / 2 : 0.5 - spec.target_rho / 2;
    for (int y : {0, 1}) {
      const double p_zy = 0.5 * (y == 1 ? p_positive : 1.0 - p_positive);
      Vector mean = y == 1 ? spec.semantic.class1_mean : spec.semantic.class0_mean;
      if (z > 0) mean += spec.sensitive_effect;
      const double mu = row.dot(mean) + spec.style.shift[disc.feature];
      double previous = 0.0;
      for (int cell = 0; cell < disc.cells(); ++cell) {
        const double upper = cell < static_cast<int>(disc.edges.size())
                                 ? normal_cdf((disc.edges[static_cast<std::size_t>(cell)] - mu) / sd)
                                 : 1.0;
        joint.support.push_back({cell, z, y});
        probs.push_back(p_zy * (upper - previous));
        previous = upper;
      }
    }
  }
  joint.probabilities = Eigen::Map<Vector>(probs.data(), static_cast<Index>(probs.size()));
  return joint;
}

namespace {

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

nlohmann::json to_json(const SyntheticDomainSpec& spec) {
  nlohmann::json j;
  j["domain_id"] = spec.domain_id;
  j["target_rho"] = spec.target_rho;
  j["style"] = {{"shift", vector_json(spec.style.shift)},
                {"angle", spec.style.angle},
                {"scale", spec.style.scale}};
  j["sensitive_effect"] = vector_json(spec.sensitive_effect);
  j["n_examples"] = spec.n_examples;
  j["seed"] = spec.seed;
  j["semantic"] = {{"class0_mean", vector_json(spec.semantic.class0_mean)},
                   {"class1_mean", vector_json(spec.semantic.class1_mean)},
                   {"noise_std", spec.semantic.noise_std}};
  return j;
}

SyntheticDomainSpec domain_spec_from_json(const nlohmann::json& j) {
  SyntheticDomainSpec spec;
  spec.domain_id = j.at("domain_id").get<std::string>();
  spec.target_rho = j.at("target_rho").get<double>();
  spec.style.shift = vector_from(j.at("style").at("shift"));
  spec.style.angle = j.at("style").at("angle").get<double>();
  spec.style.scale = j.at("style").at("scale").get<double>();
  spec.sensitive_effect = vector_from(j.at("sensitive_effect"));
  spec.n_examples = j.at("n_examples").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.semantic.class0_mean = vector_from(j.at("semantic").at("class0_mean"));
  spec.semantic.class1_mean = vector_from(j.at("semantic").at("class1_mean"));
  spec.semantic.noise_std = j.at("semantic").at("noise_std").get<double>();
  spec.validate();
  return spec;
}

nlohmann::json to_json(const BenchmarkSpec& spec) {
  nlohmann::json j;
  j["domains"] = nlohmann::json::array();
  for (const auto& d : spec.domains) j["domains"].push_back(to_json(d));
  const Index dim = spec.domains.empty() ? 0 : spec.domains.front().dim();
  // flattened feature layout of the tabular file
  j["layout"] = {{"channels", 1}, {"height", 1}, {"width", dim}};
  return j;
}

}  // namespace fedora
