#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedora/types.hpp"

namespace fedora {

/// One observation (x, z, y) with z in {-1, +1} and y in {0, 1}.
struct LabeledExample {
  Vector features;
  int sensitive = 1;
  int label = 0;
};

/// Examples drawn from a single domain. `declared_rho` is generator metadata
/// and is never used by metrics.
struct DomainDataset {
  std::string domain_id;
  std::vector<LabeledExample> examples;
  std::optional<double> declared_rho;

  bool empty() const { return examples.empty(); }
  std::size_t size() const { return examples.size(); }
  /// Feature dimension of the first example, 0 when empty.
  Index feature_dim() const;
};

struct SplitPlan {
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  DomainDataset train;
  DomainDataset validation;
  DomainDataset test;
};

/// Column-major stacking of examples: features is d x n.
struct Batch {
  Matrix features;
  std::vector<int> sensitive;
  std::vector<int> labels;

  Index size() const { return features.cols(); }
  Index dim() const { return features.rows(); }
};

/// Throws ValueError on any invariant violation (label/sensitive domain,
/// mixed dimensions, non-finite features).
void validate(const DomainDataset& dataset);

/// |P(Y=1|Z=1) - P(Y=1|Z=-1)|. Throws EmptyGroup if either group is absent.
double dependence_score(const DomainDataset& dataset);

/// Deterministic split stratified on the (z, y) cells. Throws TooSmall if a
/// cell cannot populate every split with a non-zero fraction.
DatasetSplits split(const DomainDataset& dataset, const SplitPlan& plan);

Batch to_batch(const DomainDataset& dataset);
Batch pool(std::span<const DomainDataset> datasets);
Batch gather(const Batch& batch, std::span<const Index> columns);

/// Reads the `domain,z,y,x0,...` text format. Domains appear in order of
/// first occurrence.
std::vector<DomainDataset> load_tabular(const std::filesystem::path& path);
void save_tabular(std::span<const DomainDataset> datasets, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace fedora
