#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedora/core_data.hpp"
#include "fedora/nn.hpp"
#include "fedora/transform_model.hpp"

namespace fedora {

/// f: X -> 2-class logits.
struct ClassifierParams {
  Network net;

  static ClassifierParams zeros(int input_dim, const std::vector<int>& hidden);
  ClassifierParams zeros_like() const { return {net.zeros_like()}; }
  int input_dim() const { return net.input_dim(); }
};

/// Lagrange multipliers, slacks and step sizes of the primal-dual loop.
struct DualState {
  double lambda1 = 1.0;  // invariance
  double lambda2 = 1.0;  // fairness
  double gamma1 = 0.025;
  double gamma2 = 0.025;
  double eta_primal = 1e-3;
  double eta_dual = 0.05;
};

/// lambda_k <- max(lambda_k + eta_dual * (loss_k - gamma_k), 0).
DualState dual_step(const DualState& state, double inv_loss, double fair_loss);

enum class TrainMode {
  full,             // augmentation with sampled sensitive and style codes
  ablate_no_Ea,     // style-only augmentation, z kept, lambda2 dual only
  ablate_no_T,      // no augmentation, lambda2 dual only
  ablate_no_Lfair,  // full augmentation, lambda1 dual only
};

std::string to_string(TrainMode mode);
/// Accepts full, no-ea, no-t, no-lfair.
TrainMode parse_mode(const std::string& text);
/// Whether the mode needs a transformation model, and whether it needs the inner level.
bool mode_uses_transform(TrainMode mode);
bool mode_uses_inner_level(TrainMode mode);

struct FedoraConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  DualState initial;
  TrainMode mode = TrainMode::full;
  std::vector<int> hidden{32, 32};
  bool freeze_lambda1 = false;
  bool freeze_lambda2 = false;

  /// Batch size of 2 or more per sensitive group is advisable but not enforced.
  void validate() const;
};

struct FedoraTraceRow {
  std::size_t iteration = 0;
  double cls = 0;
  double inv = 0;
  double fair = 0;
  double lambda1 = 0;
  double lambda2 = 0;
};

struct FedoraResult {
  ClassifierParams params;
  std::vector<FedoraTraceRow> trace;
  DualState final_state;
  std::size_t augment_calls = 0;
  /// Minibatches whose fairness term was skipped for lack of one group.
  std::size_t degenerate_batches = 0;
};

/// Called with the iteration count completed so far and the current weights.
using CheckpointCallback = std::function<void(std::size_t, const ClassifierParams&)>;

// Losses accumulate `scale * gradient` into `grads` when given.

/// Mean cross-entropy of softmax(f(x)) against labels.
double classification_loss(const ClassifierParams& params, const Matrix& x, std::span<const int> labels,
                           ClassifierParams* grads = nullptr, double scale = 1.0);

/// Mean KL(softmax f(x) || softmax f(x')), original as reference.
double invariance_loss(const ClassifierParams& params, const Matrix& x, const Matrix& x_aug,
                       ClassifierParams* grads = nullptr, double scale = 1.0);

/// |mean g(score, z)| of one batch with its own empirical p1; 0 (and
/// `degenerate` set) when a group is absent.
double batch_fairness_gap(const ClassifierParams& params, const Matrix& x, std::span<const int> z,
                          ClassifierParams* grads = nullptr, double scale = 1.0,
                          bool* degenerate = nullptr);

/// Gap on the original batch plus gap on the augmented batch.
double fairness_loss(const ClassifierParams& params, const Matrix& x, std::span<const int> z,
                     const Matrix& x_aug, std::span<const int> z_aug,
                     ClassifierParams* grads = nullptr, double scale = 1.0,
                     std::size_t* degenerate_count = nullptr);

/// Minibatch primal-dual training. Modes other than ablate_no_T need a
/// trained transform (with the inner level unless ablate_no_Ea).
/// Throws NonFiniteLoss.
FedoraResult train_fedora(const TransformModelParams* transform, std::span<const DomainDataset> datasets,
                          const FedoraConfig& config, const CheckpointCallback& on_checkpoint = {},
                          std::size_t checkpoint_every = 0);

/// Same as train_fedora with `mode` overriding config.mode.
FedoraResult train_ablation(TrainMode mode, const TransformModelParams* transform,
                            std::span<const DomainDataset> datasets, FedoraConfig config,
                            const CheckpointCallback& on_checkpoint = {}, std::size_t checkpoint_every = 0);

struct Prediction {
  int hard_label = 0;
  double score = 0;
};

Prediction predict(const ClassifierParams& params, const Vector& x);
/// Scores P(y=1|x) for each column.
std::vector<double> predict_scores(const ClassifierParams& params, const Matrix& x);
std::vector<int> hard_labels(std::span<const double> scores);

void save_classifier(const ClassifierParams& params, const FedoraConfig& config,
                     const std::filesystem::path& path);
ClassifierParams load_classifier(const std::filesystem::path& path);
nlohmann::json to_json(const FedoraConfig& config);

/// Header iter,L_cls,L_inv,L_fair,lambda1,lambda2.
void write_trace_csv(std::span<const FedoraTraceRow> trace, const std::filesystem::path& path);

}  // namespace fedora
