#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedora/core_data.hpp"
#include "fedora/fairness_metrics.hpp"
#include "fedora/types.hpp"

namespace fedora {

/// Per-domain affine map x = scale * R(angle) * u + shift, where R rotates the
/// plane spanned by features 0 and 1.
struct StyleTransform {
  Vector shift;
  double angle = 0.0;
  double scale = 1.0;
};

/// Class-conditional Gaussian content shared by every domain.
struct SemanticModel {
  Vector class0_mean;
  Vector class1_mean;
  double noise_std = 1.0;
};

struct SyntheticDomainSpec {
  std::string domain_id;
  double target_rho = 0.0;
  StyleTransform style;
  Vector sensitive_effect;  // added to the content when z = +1
  std::size_t n_examples = 1000;
  std::uint64_t seed = 0;
  SemanticModel semantic;

  Index dim() const { return semantic.class0_mean.size(); }
  /// Throws InvalidSpec.
  void validate() const;
};

/// A sampled domain together with the content draws u ~ N(mean_y, sigma^2 I)
/// that existed before the sensitive effect and style were applied.
struct GeneratedDomain {
  DomainDataset dataset;
  Matrix content;  // d x n
};

Vector apply_style(const StyleTransform& style, const Vector& u);
Vector undo_style(const StyleTransform& style, const Vector& x);

/// z ~ Uniform{-1,+1}; P(y=1|z=+1) = (1+rho)/2, P(y=1|z=-1) = (1-rho)/2.
GeneratedDomain gen_tabular_domain_detailed(const SyntheticDomainSpec& spec);
DomainDataset gen_tabular_domain(const SyntheticDomainSpec& spec);

struct BenchmarkSpec {
  std::vector<SyntheticDomainSpec> domains;
};

/// Content model and sensitive effect of the toy benchmark: features 0-3 carry
/// the class signal, features 4-7 shift by +2 when z = +1.
SemanticModel toy_semantic_model();
Vector toy_sensitive_effect();

/// One domain per (rho, style) pair with shared content model; seeds are
/// derived from `seed` and the domain id.
BenchmarkSpec make_benchmark(std::span<const std::string> domain_ids, std::span<const double> rhos,
                             std::span<const StyleTransform> styles, std::size_t n_per_domain,
                             std::uint64_t seed, const SemanticModel& semantic,
                             const Vector& sensitive_effect);

/// Three domains R, G, B with rho = 0.11, 0.43, 0.87 and distinct styles.
BenchmarkSpec default_benchmark(std::size_t n_per_domain, std::uint64_t seed);
std::vector<StyleTransform> default_styles(Index dim);
std::vector<double> default_rhos();

std::vector<DomainDataset> gen_benchmark(const BenchmarkSpec& spec);
std::vector<DomainDataset> gen_benchmark(std::span<const double> rhos,
                                         std::span<const StyleTransform> styles,
                                         std::size_t n_per_domain, std::uint64_t seed);

/// Bins one styled feature coordinate into edges.size() + 1 cells.
struct Discretization {
  int feature = 0;
  std::vector<double> edges;
  int cells() const { return static_cast<int>(edges.size()) + 1; }
};

/// Analytic P(cell, z, y) of the sampling process. At most 16 cells.
DiscreteJoint exact_joint(const SyntheticDomainSpec& spec, const Discretization& discretization);

nlohmann::json to_json(const SyntheticDomainSpec& spec);
SyntheticDomainSpec domain_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkSpec& spec);

}  // namespace fedora
