#include "fedora/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedora/errors.hpp"

namespace fedora {

namespace {

struct Field {
  std::string section;  // empty for global keys
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string name() const { return section.empty() ? key : section + "." + key; }
};

template <class T>
T parse_integer(const std::string& name, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + name + "': expected an integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& name, const std::string& text) {
  try {
    return parse_double(text);
  } catch (const Error&) {
    throw ConfigError("config key '" + name + "': expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& name, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + name + "': expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F format) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) out += (k ? "," : "") + format(values[k]);
  return out;
}

std::string int_text(auto v) { return std::to_string(v); }
std::string bool_text(bool v) { return v ? "true" : "false"; }

// Member accessors for the table below.
template <class T>
Field real_field(std::string section, std::string key, T RunConfig::*outer, double T::*member) {
  Field f{section, key, {}, {}};
  f.get = [=](const RunConfig& c) { return format_double(c.*outer.*member); };
  f.set = [=, name = f.name()](RunConfig& c, const std::string& v) { c.*outer.*member = parse_real(name, v); };
  return f;
}

Field real_field(std::string section, std::string key, double RunConfig::*member) {
  Field f{section, key, {}, {}};
  f.get = [=](const RunConfig& c) { return format_double(c.*member); };
  f.set = [=, name = f.name()](RunConfig& c, const std::string& v) { c.*member = parse_real(name, v); };
  return f;
}

template <class T, class U>
Field count_field(std::string section, std::string key, T RunConfig::*outer, U T::*member) {
  Field f{section, key, {}, {}};
  f.get = [=](const RunConfig& c) { return int_text(c.*outer.*member); };
  f.set = [=, name = f.name()](RunConfig& c, const std::string& v) { c.*outer.*member = parse_integer<U>(name, v); };
  return f;
}

template <class U>
Field count_field(std::string section, std::string key, U RunConfig::*member) {
  Field f{section, key, {}, {}};
  f.get = [=](const RunConfig& c) { return int_text(c.*member); };
  f.set = [=, name = f.name()](RunConfig& c, const std::string& v) { c.*member = parse_integer<U>(name, v); };
  return f;
}

Field path_field(std::string section, std::string key, std::filesystem::path RunConfig::*member) {
  Field f{section, key, {}, {}};
  f.get = [=](const RunConfig& c) { return (c.*member).generic_string(); };
  f.set = [=](RunConfig& c, const std::string& v) { c.*member = v; };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using TC = TransformTrainConfig;
    using RC = RunConfig;
    std::vector<Field> t;
    t.push_back(count_field("", "seed", &RC::seed));
    t.push_back(path_field("", "out", &RC::out));

    t.push_back(path_field("data", "path", &RC::data_path));
    t.push_back(count_field("data", "n_per_domain", &RC::n_per_domain));
    t.push_back(real_field("data", "train_fraction", &RC::train_fraction));
    t.push_back(real_field("data", "validation_fraction", &RC::validation_fraction));

    t.push_back(real_field("transform", "beta1", &RC::transform, &TC::beta1));
    t.push_back(real_field("transform", "beta2", &RC::transform, &TC::beta2));
    t.push_back(real_field("transform", "beta3", &RC::transform, &TC::beta3));
    t.push_back(real_field("transform", "beta4", &RC::transform, &TC::beta4));
    t.push_back(real_field("transform", "lr_discriminator", &RC::transform, &TC::lr_discriminator));
    t.push_back(real_field("transform", "lr_autoencoder", &RC::transform, &TC::lr_autoencoder));
    t.push_back(real_field("transform", "lr_sensitive", &RC::transform, &TC::lr_sensitive));
    {
      Field f{"transform", "sensitive_to_encoders", {}, {}};
      f.get = [](const RunConfig& c) { return bool_text(c.transform.sensitive_to_encoders); };
      f.set = [name = f.name()](RunConfig& c, const std::string& v) { c.transform.sensitive_to_encoders = parse_bool(name, v); };
      t.push_back(f);
    }
    t.push_back(count_field("transform", "iterations", &RC::transform, &TC::iterations));
    t.push_back(count_field("transform", "batch_size", &RC::transform, &TC::batch_size));
    t.push_back(path_field("transform", "checkpoint", &RC::transform_checkpoint));

    auto dual = [&](std::string key, double DualState::*member) {
      Field f{"fedora", key, {}, {}};
      f.get = [=](const RunConfig& c) { return format_double(c.fedora.initial.*member); };
      f.set = [=, name = f.name()](RunConfig& c, const std::string& v) { c.fedora.initial.*member = parse_real(name, v); };
      return f;
    };
    t.push_back(count_field("fedora", "iterations", &RC::fedora, &FedoraConfig::iterations));
    t.push_back(count_field("fedora", "batch_size", &RC::fedora, &FedoraConfig::batch_size));
    t.push_back(dual("lambda1", &DualState::lambda1));
    t.push_back(dual("lambda2", &DualState::lambda2));
    t.push_back(dual("gamma1", &DualState::gamma1));
    t.push_back(dual("gamma2", &DualState::gamma2));
    t.push_back(dual("eta_primal", &DualState::eta_primal));
    t.push_back(dual("eta_dual", &DualState::eta_dual));
    {
      Field f{"fedora", "mode", {}, {}};
      f.get = [](const RunConfig& c) { return to_string(c.fedora.mode); };
      f.set = [](RunConfig& c, const std::string& v) { c.fedora.mode = parse_mode(v); };
      t.push_back(f);
    }
    {
      Field f{"fedora", "hidden", {}, {}};
      f.get = [](const RunConfig& c) { return join(c.fedora.hidden, [](int v) { return std::to_string(v); }); };
      f.set = [name = f.name()](RunConfig& c, const std::string& v) {
        c.fedora.hidden.clear();
        if (v.empty()) return;
        for (const auto& item : split_list(v)) c.fedora.hidden.push_back(parse_integer<int>(name, item));
      };
      t.push_back(f);
    }
    for (auto [key, member] : {std::pair{"freeze_lambda1", &FedoraConfig::freeze_lambda1},
                               std::pair{"freeze_lambda2", &FedoraConfig::freeze_lambda2}}) {
      Field f{"fedora", key, {}, {}};
      f.get = [m = member](const RunConfig& c) { return bool_text(c.fedora.*m); };
      f.set = [m = member, name = f.name()](RunConfig& c, const std::string& v) { c.fedora.*m = parse_bool(name, v); };
      t.push_back(f);
    }
    t.push_back(path_field("fedora", "checkpoint", &RC::classifier_checkpoint));

    {
      Field f{"experiment", "name", {}, {}};
      f.get = [](const RunConfig& c) { return c.experiment; };
      f.set = [](RunConfig& c, const std::string& v) { c.experiment = v; };
      t.push_back(f);
    }
    t.push_back(count_field("experiment", "repeats", &RC::repeats));
    t.push_back(real_field("experiment", "rho_cap", &RC::rho_cap));
    t.push_back(count_field("experiment", "checkpoints", &RC::checkpoints));
    {
      Field f{"experiment", "sweep", {}, {}};
      f.get = [](const RunConfig& c) { return join(c.sweep, [](double v) { return format_double(v); }); };
      f.set = [name = f.name()](RunConfig& c, const std::string& v) {
        c.sweep.clear();
        for (const auto& item : split_list(v)) c.sweep.push_back(parse_real(name, item));
      };
      t.push_back(f);
    }
    {
      Field f{"experiment", "holdout", {}, {}};
      f.get = [](const RunConfig& c) { return c.holdout; };
      f.set = [](RunConfig& c, const std::string& v) { c.holdout = v; };
      t.push_back(f);
    }

    t.push_back(count_field("audit", "triples", &RC::audit_triples));
    t.push_back(count_field("audit", "cells", &RC::audit_cells));
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

std::filesystem::path RunConfig::resolved_data_path() const {
  return data_path.empty() ? out / "data" / "benchmark.csv" : data_path;
}
std::filesystem::path RunConfig::resolved_transform_checkpoint() const {
  return transform_checkpoint.empty() ? out / "transform" / "transform.json" : transform_checkpoint;
}
std::filesystem::path RunConfig::resolved_classifier_checkpoint() const {
  return classifier_checkpoint.empty() ? out / "classifier" / "classifier.json" : classifier_checkpoint;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ConfigError("config key '" + key + "': " + why);
  };
  require(!out.empty(), "out", "must not be empty");
  require(n_per_domain >= 10, "data.n_per_domain", "must be at least 10");
  require(train_fraction > 0 && validation_fraction > 0 && train_fraction + validation_fraction < 1,
          "data.train_fraction", "train and validation fractions must be positive and leave a test split");
  require(repeats >= 1, "experiment.repeats", "must be at least 1");
  require(checkpoints >= 1, "experiment.checkpoints", "must be at least 1");
  require(rho_cap >= 0, "experiment.rho_cap", "must be nonnegative");
  require(!experiment.empty() && experiment.find_first_of("/\\") == std::string::npos, "experiment.name",
          "must be a non-empty name without path separators");
  require(!sweep.empty(), "experiment.sweep", "needs at least one value");
  for (double v : sweep) require(v > 0 && std::isfinite(v), "experiment.sweep", "values must be positive");
  require(audit_triples >= 1, "audit.triples", "must be at least 1");
  require(audit_cells >= 2 && audit_cells <= 16, "audit.cells", "must lie in [2, 16]");
  try {
    TransformTrainConfig tc = transform;
    tc.shape.input_dim = std::max(tc.shape.input_dim, 1);
    tc.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("[transform] ") + e.what());
  }
  try {
    fedora.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("[fedora] ") + e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const Field* f = find_field("", name);
      if (!f) throw ConfigError("unknown config key '" + name + "'");
      f->set(config, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      const Field* f = find_field(name, key);
      if (!f) throw ConfigError("unknown config key '" + name + "." + key + "'");
      f->set(config, leaf.data());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_run_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    const std::string value = f.get(config);
    out += f.key + (value.empty() ? " =" : " = " + value) + "\n";
  }
  return out;
}

std::filesystem::path write_manifest(const RunConfig& config, const std::string& command) {
  const auto path = config.out / ("run_manifest." + command + ".ini");
  std::filesystem::create_directories(config.out);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "; " << command << " run, resolved configuration\n" << to_ini(config);
  if (!out) throw IoError("write failed for " + path.string());
  return path;
}

ExperimentPlan make_plan(const RunConfig& config, std::vector<DomainDataset> datasets) {
  ExperimentPlan plan;
  plan.datasets = std::move(datasets);
  plan.mode = config.fedora.mode;
  plan.fedora = config.fedora;
  plan.transform = config.transform;
  plan.repeats = config.repeats;
  plan.output_dir = config.out;
  plan.experiment = config.experiment;
  plan.split = {config.train_fraction, config.validation_fraction, derive_seed(config.seed, "split")};
  plan.rho_cap = config.rho_cap;
  plan.checkpoints = config.checkpoints;
  plan.seed = derive_seed(config.seed, "experiment");
  return plan;
}

}  // namespace fedora
