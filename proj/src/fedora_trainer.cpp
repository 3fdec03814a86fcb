#include "fedora/fedora_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "fedora/errors.hpp"

namespace fedora {

using Tape = nn::MlpTape<double>;

ClassifierParams ClassifierParams::zeros(int input_dim, const std::vector<int>& hidden) {
  std::vector<int> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2);
  return {Network(widths)};
}

DualState dual_step(const DualState& state, double inv_loss, double fair_loss) {
  DualState next = state;
  next.lambda1 = std::max(state.lambda1 + state.eta_dual * (inv_loss - state.gamma1), 0.0);
  next.lambda2 = std::max(state.lambda2 + state.eta_dual * (fair_loss - state.gamma2), 0.0);
  return next;
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::full: return "full";
    case TrainMode::ablate_no_Ea: return "no-ea";
    case TrainMode::ablate_no_T: return "no-t";
    case TrainMode::ablate_no_Lfair: return "no-lfair";
  }
  return "full";
}

TrainMode parse_mode(const std::string& text) {
  if (text == "full") return TrainMode::full;
  if (text == "no-ea") return TrainMode::ablate_no_Ea;
  if (text == "no-t") return TrainMode::ablate_no_T;
  if (text == "no-lfair") return TrainMode::ablate_no_Lfair;
  throw ConfigError("unknown mode '" + text + "' (expected full, no-ea, no-t, no-lfair)");
}

bool mode_uses_transform(TrainMode mode) { return mode != TrainMode::ablate_no_T; }
bool mode_uses_inner_level(TrainMode mode) {
  return mode == TrainMode::full || mode == TrainMode::ablate_no_Lfair;
}

void FedoraConfig::validate() const {
  if (iterations == 0 || batch_size == 0) throw ValueError("FedoraConfig: iterations and batch_size must be positive");
  if (!(initial.eta_primal > 0.0) || !(initial.eta_dual > 0.0)) {
    throw ValueError("FedoraConfig: learning rates must be positive");
  }
  if (!(initial.lambda1 >= 0.0) || !(initial.lambda2 >= 0.0) || !(initial.gamma1 >= 0.0) ||
      !(initial.gamma2 >= 0.0)) {
    throw ValueError("FedoraConfig: multipliers and slacks must be nonnegative");
  }
  for (int h : hidden) {
    if (h <= 0) throw ValueError("FedoraConfig: hidden widths must be positive");
  }
}

namespace {

void check_labels(const Matrix& x, std::span<const int> v, const char* who) {
  if (static_cast<Index>(v.size()) != x.cols()) {
    throw LengthMismatch(std::string(who) + ": one entry per column required");
  }
}

}  // namespace

double classification_loss(const ClassifierParams& params, const Matrix& x, std::span<const int> labels,
                           ClassifierParams* grads, double scale) {
  check_labels(x, labels, "classification_loss");
  Tape tape;
  const Matrix logits = params.net.forward(x, tape);
  const Matrix log_prob = nn::log_softmax_columns(logits);
  const double n = static_cast<double>(x.cols());
  double loss = 0.0;
  for (Index i = 0; i < x.cols(); ++i) loss -= log_prob(labels[static_cast<std::size_t>(i)], i);
  loss /= n;
  if (grads) {
    Matrix g = log_prob.array().exp();
    for (Index i = 0; i < x.cols(); ++i) g(labels[static_cast<std::size_t>(i)], i) -= 1.0;
    params.net.backward(tape, (scale / n) * g, grads->net);
  }
  return loss;
}

double invariance_loss(const ClassifierParams& params, const Matrix& x, const Matrix& x_aug,
                       ClassifierParams* grads, double scale) {
  if (x.cols() != x_aug.cols() || x.rows() != x_aug.rows()) {
    throw LengthMismatch("invariance_loss: original and augmented batches must align");
  }
  Tape tape, tape_aug;
  const Matrix log_p = nn::log_softmax_columns(params.net.forward(x, tape));
  const Matrix log_q = nn::log_softmax_columns(params.net.forward(x_aug, tape_aug));
  const Matrix p = log_p.array().exp();
  const Matrix ratio = log_p - log_q;
  const RowVector kl = p.cwiseProduct(ratio).colwise().sum();
  const double n = static_cast<double>(x.cols());
  if (grads) {
    const Matrix q = log_q.array().exp();
    const Matrix g_orig = p.cwiseProduct(ratio.rowwise() - kl);
    params.net.backward(tape, (scale / n) * g_orig, grads->net);
    params.net.backward(tape_aug, (scale / n) * (q - p), grads->net);
  }
  return kl.sum() / n;
}

double batch_fairness_gap(const ClassifierParams& params, const Matrix& x, std::span<const int> z,
                          ClassifierParams* grads, double scale, bool* degenerate) {
  check_labels(x, z, "fairness_loss");
  const double n = static_cast<double>(x.cols());
  const auto positives = std::count_if(z.begin(), z.end(), [](int v) { return v > 0; });
  const double p1 = n > 0 ? static_cast<double>(positives) / n : 0.0;
  if (degenerate) *degenerate = !(p1 > 0.0 && p1 < 1.0);
  if (!(p1 > 0.0 && p1 < 1.0)) return 0.0;

  Tape tape;
  const Matrix logits = params.net.forward(x, tape);
  const RowVector score = nn::sigmoid(logits.row(1) - logits.row(0));
  RowVector weight(x.cols());
  for (Index i = 0; i < x.cols(); ++i) {
    weight[i] = ((z[static_cast<std::size_t>(i)] + 1) / 2.0 - p1) / (p1 * (1.0 - p1));
  }
  const double gap = weight.cwiseProduct(score).sum() / n;
  if (grads && gap != 0.0) {
    const double sign = gap > 0 ? 1.0 : -1.0;
    const RowVector d_score = (scale * sign / n) * weight;
    const RowVector d_logit = d_score.cwiseProduct(score.cwiseProduct((1.0 - score.array()).matrix()));
    Matrix g(2, x.cols());
    g.row(0) = -d_logit;
    g.row(1) = d_logit;
    params.net.backward(tape, g, grads->net);
  }
  return std::abs(gap);
}

double fairness_loss(const ClassifierParams& params, const Matrix& x, std::span<const int> z,
                     const Matrix& x_aug, std::span<const int> z_aug, ClassifierParams* grads,
                     double scale, std::size_t* degenerate_count) {
  bool degenerate_orig = false;
  bool degenerate_aug = false;
  const double loss = batch_fairness_gap(params, x, z, grads, scale, &degenerate_orig) +
                      batch_fairness_gap(params, x_aug, z_aug, grads, scale, &degenerate_aug);
  if (degenerate_count) *degenerate_count += (degenerate_orig ? 1 : 0) + (degenerate_aug ? 1 : 0);
  return loss;
}

FedoraResult train_fedora(const TransformModelParams* transform, std::span<const DomainDataset> datasets,
                          const FedoraConfig& config, const CheckpointCallback& on_checkpoint,
                          std::size_t checkpoint_every) {
  config.validate();
  if (datasets.empty()) throw EmptySources("train_fedora: no source domains");
  const Batch all = pool(datasets);
  if (all.size() == 0) throw EmptySources("train_fedora: source domains are empty");
  const TrainMode mode = config.mode;
  if (mode_uses_transform(mode)) {
    if (!transform) throw MissingInput("train_fedora: mode " + to_string(mode) + " needs a transformation model");
    if (transform->shape.input_dim != all.dim()) {
      throw DimensionMismatch("train_fedora: transform input dimension differs from the data");
    }
    if (mode_uses_inner_level(mode) && !transform->shape.inner_level) {
      throw DimensionMismatch("train_fedora: mode " + to_string(mode) + " needs the inner level");
    }
  }

  std::mt19937_64 init_rng(derive_seed(config.seed, "classifier/init"));
  std::mt19937_64 batch_rng(derive_seed(config.seed, "classifier/batches"));
  std::mt19937_64 prior_rng(derive_seed(config.seed, "classifier/priors"));

  FedoraResult result;
  result.params = ClassifierParams::zeros(static_cast<int>(all.dim()), config.hidden);
  result.params.net.initialize(init_rng);
  auto& P = result.params;
  nn::AdamOptions<double> opts;
  opts.learning_rate = config.initial.eta_primal;
  nn::Adam<double> optimizer(P.net, opts);

  DualState state = config.initial;
  const bool lambda1_active = (mode == TrainMode::full || mode == TrainMode::ablate_no_Lfair) && !config.freeze_lambda1;
  const bool lambda2_active = mode != TrainMode::ablate_no_Lfair && !config.freeze_lambda2;

  std::uniform_int_distribution<Index> pick(0, all.size() - 1);
  std::vector<Index> idx(config.batch_size);
  result.trace.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (auto& i : idx) i = pick(batch_rng);
    const Batch batch = gather(all, idx);
    const Matrix& x = batch.features;

    FedoraTraceRow row;
    row.iteration = it;
    auto grads = P.zeros_like();
    row.cls = classification_loss(P, x, batch.labels, &grads, 1.0);

    switch (mode) {
      case TrainMode::full: {
        const auto aug = augment(*transform, batch, prior_rng);
        ++result.augment_calls;
        row.inv = invariance_loss(P, x, aug.features, &grads, state.lambda1);
        row.fair = fairness_loss(P, x, batch.sensitive, aug.features, aug.sensitive, &grads, state.lambda2,
                                 &result.degenerate_batches);
        break;
      }
      case TrainMode::ablate_no_Ea: {
        const auto draw = draw_priors(transform->shape, batch.size(), prior_rng);
        const auto aug = augment_style_only(*transform, batch, draw.style_s);
        ++result.augment_calls;
        row.cls += classification_loss(P, aug.features, aug.labels, &grads, 1.0);
        bool degenerate = false;
        row.fair = batch_fairness_gap(P, x, batch.sensitive, &grads, state.lambda2, &degenerate);
        result.degenerate_batches += degenerate ? 1 : 0;
        break;
      }
      case TrainMode::ablate_no_T: {
        bool degenerate = false;
        row.fair = batch_fairness_gap(P, x, batch.sensitive, &grads, state.lambda2, &degenerate);
        result.degenerate_batches += degenerate ? 1 : 0;
        break;
      }
      case TrainMode::ablate_no_Lfair: {
        auto aug = augment(*transform, batch, prior_rng);
        ++result.augment_calls;
        aug.sensitive = batch.sensitive;
        row.inv = invariance_loss(P, x, aug.features, &grads, state.lambda1);
        // monitored only; contributes no gradient
        row.fair = fairness_loss(P, x, batch.sensitive, aug.features, aug.sensitive);
        break;
      }
    }

    for (double v : {row.cls, row.inv, row.fair}) {
      if (!std::isfinite(v)) throw NonFiniteLoss("train_fedora: non-finite loss", it);
    }
    optimizer.step(P.net, grads.net);

    const DualState next = dual_step(state, row.inv, row.fair);
    if (lambda1_active) state.lambda1 = next.lambda1;
    if (lambda2_active) state.lambda2 = next.lambda2;
    row.lambda1 = state.lambda1;
    row.lambda2 = state.lambda2;
    result.trace.push_back(row);

    if (on_checkpoint && checkpoint_every > 0 && (it + 1) % checkpoint_every == 0) on_checkpoint(it + 1, P);
  }
  if (!P.net.all_finite()) throw NonFiniteLoss("train_fedora: non-finite weights", config.iterations);
  result.final_state = state;
  return result;
}

FedoraResult train_ablation(TrainMode mode, const TransformModelParams* transform,
                            std::span<const DomainDataset> datasets, FedoraConfig config,
                            const CheckpointCallback& on_checkpoint, std::size_t checkpoint_every) {
  config.mode = mode;
  return train_fedora(transform, datasets, config, on_checkpoint, checkpoint_every);
}

std::vector<double> predict_scores(const ClassifierParams& params, const Matrix& x) {
  if (x.rows() != params.input_dim()) {
    throw DimensionMismatch("predict: expected " + std::to_string(params.input_dim()) + " features");
  }
  const Matrix logits = params.net.forward(x);
  const RowVector score = nn::sigmoid(logits.row(1) - logits.row(0));
  return {score.data(), score.data() + score.size()};
}

std::vector<int> hard_labels(std::span<const double> scores) {
  std::vector<int> out(scores.size());
  std::transform(scores.begin(), scores.end(), out.begin(), [](double s) { return s >= 0.5 ? 1 : 0; });
  return out;
}

Prediction predict(const ClassifierParams& params, const Vector& x) {
  const double score = predict_scores(params, Matrix(x)).front();
  return {score >= 0.5 ? 1 : 0, score};
}

nlohmann::json to_json(const FedoraConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"mode", to_string(c.mode)},
          {"hidden", c.hidden},
          {"freeze_lambda1", c.freeze_lambda1},
          {"freeze_lambda2", c.freeze_lambda2},
          {"lambda1", c.initial.lambda1},
          {"lambda2", c.initial.lambda2},
          {"gamma1", c.initial.gamma1},
          {"gamma2", c.initial.gamma2},
          {"eta_primal", c.initial.eta_primal},
          {"eta_dual", c.initial.eta_dual}};
}

namespace {
constexpr const char* kClassifierFormat = "fedora.classifier";
constexpr int kClassifierVersion = 1;
}  // namespace

void save_classifier(const ClassifierParams& params, const FedoraConfig& config,
                     const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kClassifierFormat;
  j["version"] = kClassifierVersion;
  j["config"] = to_json(config);
  j["network"] = network_to_json(params.net);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

ClassifierParams load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != kClassifierFormat) throw CheckpointError(path.string() + ": not a classifier checkpoint");
    if (j.value("version", -1) != kClassifierVersion) {
      throw CheckpointError(path.string() + ": unsupported checkpoint version");
    }
    const auto widths = j.at("network").at("widths").get<std::vector<int>>();
    if (widths.size() < 2 || widths.back() != 2) throw CheckpointError(path.string() + ": classifier must emit 2 logits");
    return {network_from_json(j.at("network"), widths)};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void write_trace_csv(std::span<const FedoraTraceRow> trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,L_cls,L_inv,L_fair,lambda1,lambda2\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << format_double(r.cls) << ',' << format_double(r.inv) << ','
        << format_double(r.fair) << ',' << format_double(r.lambda1) << ',' << format_double(r.lambda2) << '\n';
  }
}

}  // namespace fedora
