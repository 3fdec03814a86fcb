#include "fedora/core_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "fedora/errors.hpp"

namespace fedora {

Index DomainDataset::feature_dim() const {
  return examples.empty() ? 0 : examples.front().features.size();
}

void validate(const DomainDataset& dataset) {
  const Index d = dataset.feature_dim();
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    if (ex.sensitive != -1 && ex.sensitive != 1) {
      throw ValueError("example " + std::to_string(i) + " of domain '" + dataset.domain_id +
                       "': sensitive must be -1 or 1");
    }
    if (ex.label != 0 && ex.label != 1) {
      throw ValueError("example " + std::to_string(i) + " of domain '" + dataset.domain_id +
                       "': label must be 0 or 1");
    }
    if (ex.features.size() != d) {
      throw ValueError("example " + std::to_string(i) + " of domain '" + dataset.domain_id +
                       "': feature dimension " + std::to_string(ex.features.size()) +
                       " != " + std::to_string(d));
    }
    if (!ex.features.allFinite()) {
      throw ValueError("example " + std::to_string(i) + " of domain '" + dataset.domain_id +
                       "': non-finite feature");
    }
  }
}

double dependence_score(const DomainDataset& dataset) {
  std::array<double, 2> count{0, 0};
  std::array<double, 2> positive{0, 0};
  for (const auto& ex : dataset.examples) {
    const int g = ex.sensitive > 0 ? 1 : 0;
    count[g] += 1;
    positive[g] += ex.label;
  }
  if (count[0] == 0 || count[1] == 0) {
    throw EmptyGroup("dependence_score: domain '" + dataset.domain_id +
                     "' lacks a sensitive group");
  }
  return std::abs(positive[1] / count[1] - positive[0] / count[0]);
}

DatasetSplits split(const DomainDataset& dataset, const SplitPlan& plan) {
  const double test_fraction = 1.0 - plan.train_fraction - plan.validation_fraction;
  if (!(plan.train_fraction > 0 && plan.train_fraction < 1) ||
      !(plan.validation_fraction > 0 && plan.validation_fraction < 1) || test_fraction < -1e-12) {
    throw ValueError("split: fractions must lie in (0,1) and sum to at most 1");
  }
  if (dataset.empty()) throw TooSmall("split: dataset '" + dataset.domain_id + "' is empty");
  const bool has_test = test_fraction > 1e-12;
  const std::size_t required = has_test ? 3 : 2;

  // cells indexed by 2 * (z > 0) + y
  std::array<std::vector<std::size_t>, 4> cells;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    cells[2 * (ex.sensitive > 0 ? 1 : 0) + ex.label].push_back(i);
  }

  std::mt19937_64 rng(plan.seed);
  std::vector<int> assignment(dataset.examples.size(), 2);
  for (auto& cell : cells) {
    if (cell.empty()) continue;
    if (cell.size() < required) {
      throw TooSmall("split: a (z,y) cell of domain '" + dataset.domain_id + "' has " +
                     std::to_string(cell.size()) + " examples, need " +
                     std::to_string(required));
    }
    std::shuffle(cell.begin(), cell.end(), rng);
    const auto n = static_cast<double>(cell.size());
    auto n_train = static_cast<std::size_t>(std::llround(plan.train_fraction * n));
    auto n_val = static_cast<std::size_t>(std::llround(plan.validation_fraction * n));
    if (!has_test) n_val = cell.size() - std::min(n_train, cell.size());
    n_train = std::min(n_train, cell.size());
    n_val = std::min(n_val, cell.size() - n_train);
    for (std::size_t k = 0; k < cell.size(); ++k) {
      assignment[cell[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    }
  }

  DatasetSplits out;
  for (auto* part : {&out.train, &out.validation, &out.test}) {
    part->domain_id = dataset.domain_id;
    part->declared_rho = dataset.declared_rho;
  }
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    auto& target = assignment[i] == 0 ? out.train : (assignment[i] == 1 ? out.validation : out.test);
    target.examples.push_back(dataset.examples[i]);
  }
  return out;
}

Batch to_batch(const DomainDataset& dataset) {
  const DomainDataset* one = &dataset;
  return pool(std::span<const DomainDataset>(one, 1));
}

Batch pool(std::span<const DomainDataset> datasets) {
  Index n = 0;
  Index d = -1;
  for (const auto& ds : datasets) {
    n += static_cast<Index>(ds.size());
    if (!ds.empty()) {
      if (d >= 0 && ds.feature_dim() != d) {
        throw DimensionMismatch("pool: domains disagree on feature dimension");
      }
      d = ds.feature_dim();
    }
  }
  Batch batch;
  batch.features.resize(std::max<Index>(d, 0), n);
  batch.sensitive.reserve(static_cast<std::size_t>(n));
  batch.labels.reserve(static_cast<std::size_t>(n));
  Index col = 0;
  for (const auto& ds : datasets) {
    for (const auto& ex : ds.examples) {
      batch.features.col(col++) = ex.features;
      batch.sensitive.push_back(ex.sensitive);
      batch.labels.push_back(ex.label);
    }
  }
  return batch;
}

Batch gather(const Batch& batch, std::span<const Index> columns) {
  Batch out;
  out.features.resize(batch.dim(), static_cast<Index>(columns.size()));
  out.sensitive.reserve(columns.size());
  out.labels.reserve(columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const Index c = columns[k];
    out.features.col(static_cast<Index>(k)) = batch.features.col(c);
    out.sensitive.push_back(batch.sensitive[static_cast<std::size_t>(c)]);
    out.labels.push_back(batch.labels[static_cast<std::size_t>(c)]);
  }
  return out;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw ValueError("format_double: conversion failed");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  double value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw FormatError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

int parse_int(std::string_view text, std::size_t row) {
  int value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw FormatError("row " + std::to_string(row) + ": not an integer: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::vector<DomainDataset> load_tabular(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "z" || header[2] != "y") {
    throw FormatError(path.string() + ": header must start with domain,z,y");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[3 + j] != "x" + std::to_string(j)) {
      throw FormatError(path.string() + ": header column " + std::to_string(3 + j) +
                        " should be x" + std::to_string(j));
    }
  }

  std::vector<DomainDataset> out;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw FormatError("row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    LabeledExample ex;
    ex.sensitive = parse_int(fields[1], row);
    ex.label = parse_int(fields[2], row);
    if (ex.sensitive != -1 && ex.sensitive != 1) {
      throw ValueError("row " + std::to_string(row) + ": z must be -1 or 1");
    }
    if (ex.label != 0 && ex.label != 1) {
      throw ValueError("row " + std::to_string(row) + ": y must be 0 or 1");
    }
    ex.features.resize(static_cast<Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      try {
        ex.features[static_cast<Index>(j)] = parse_double(fields[3 + j]);
      } catch (const FormatError& e) {
        throw FormatError("row " + std::to_string(row) + ": " + e.what());
      }
      if (!std::isfinite(ex.features[static_cast<Index>(j)])) {
        throw ValueError("row " + std::to_string(row) + ": non-finite feature");
      }
    }
    const std::string id(fields[0]);
    auto [it, inserted] = index_of.try_emplace(id, out.size());
    if (inserted) {
      out.emplace_back();
      out.back().domain_id = id;
    }
    out[it->second].examples.push_back(std::move(ex));
  }
  return out;
}

void save_tabular(std::span<const DomainDataset> datasets, const std::filesystem::path& path) {
  Index d = -1;
  for (const auto& ds : datasets) {
    validate(ds);
    if (ds.empty()) continue;
    if (d >= 0 && ds.feature_dim() != d) {
      throw DimensionMismatch("save_tabular: domains disagree on feature dimension");
    }
    d = ds.feature_dim();
    if (ds.domain_id.find_first_of(",\n\r") != std::string::npos) {
      throw ValueError("save_tabular: domain id contains a delimiter");
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "domain,z,y";
  for (Index j = 0; j < std::max<Index>(d, 0); ++j) out << ",x" << j;
  out << '\n';
  for (const auto& ds : datasets) {
    for (const auto& ex : ds.examples) {
      out << ds.domain_id << ',' << ex.sensitive << ',' << ex.label;
      for (Index j = 0; j < ex.features.size(); ++j) out << ',' << format_double(ex.features[j]);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fedora
