#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedora/core_data.hpp"
#include "fedora/nn.hpp"
#include "fedora/types.hpp"

namespace fedora {

using Network = nn::Mlp<double>;

/// Layer widths of every sub-network. Each encoder, decoder and discriminator
/// has one ReLU hidden layer; h is a single linear unit followed by a sigmoid.
struct TransformShape {
  int input_dim = 0;
  int dim_m = 16;
  int dim_c = 8;
  int dim_a = 2;
  int dim_s = 2;
  int hidden_content = 32;    // E_m
  int hidden_style = 32;      // E_s
  int hidden_semantic = 16;   // E_c
  int hidden_sensitive = 8;   // E_a
  int hidden_inner_dec = 16;  // G_i
  int hidden_outer_dec = 32;  // G_o
  int hidden_outer_disc = 32; // D_o
  int hidden_inner_disc = 8;  // D_i
  int outer_disc_outputs = 16;
  int inner_disc_outputs = 8;
  /// false drops E_c, E_a, G_i, D_i and h: the content code m is decoded
  /// directly with the style code.
  bool inner_level = true;

  void validate() const;
};

/// E_m: X->M, E_s: X->S, E_c: M->C, E_a: M->A, G_i: CxA->M, G_o: MxS->X,
/// D_o: X->R^k, D_i: M->R^k, h: A->[0,1].
struct TransformModelParams {
  TransformShape shape;
  Network enc_content;
  Network enc_style;
  Network enc_semantic;
  Network enc_sensitive;
  Network dec_inner;
  Network dec_outer;
  Network disc_outer;
  Network disc_inner;
  Network sensitive_head;

  static TransformModelParams zeros(const TransformShape& shape);
  template <std::uniform_random_bit_generator Rng>
  static TransformModelParams random(const TransformShape& shape, Rng& rng) {
    auto p = zeros(shape);
    for (auto* net : p.networks()) net->initialize(rng);
    return p;
  }

  TransformModelParams zeros_like() const { return zeros(shape); }
  std::vector<Network*> networks();
  std::vector<const Network*> networks() const;
  bool all_finite() const;
};

struct LatentFactors {
  Vector content_m;
  Vector semantic_c;
  Vector sensitive_a;
  Vector style_s;
};

/// Column-wise factors of a batch.
struct BatchFactors {
  Matrix content_m;
  Matrix semantic_c;
  Matrix sensitive_a;
  Matrix style_s;
};

/// Samples from the N(0, I) priors of the sensitive and style factors, one
/// column per example.
struct PriorDraw {
  Matrix sensitive_a;
  Matrix style_s;
};

template <std::uniform_random_bit_generator Rng>
PriorDraw draw_priors(const TransformShape& shape, Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PriorDraw draw{Matrix(shape.dim_a, n), Matrix(shape.dim_s, n)};
  for (Index k = 0; k < draw.sensitive_a.size(); ++k) draw.sensitive_a.data()[k] = normal(rng);
  for (Index k = 0; k < draw.style_s.size(); ++k) draw.style_s.data()[k] = normal(rng);
  return draw;
}

LatentFactors encode(const TransformModelParams& params, const Vector& x);
BatchFactors encode(const TransformModelParams& params, const Matrix& x);
Vector decode(const TransformModelParams& params, const Vector& c, const Vector& a, const Vector& s);
Matrix decode(const TransformModelParams& params, const Matrix& c, const Matrix& a, const Matrix& s);
/// G_o(G_i(E_c(m), E_a(m)), E_s(x)), or G_o(E_m(x), E_s(x)) without the inner level.
Matrix reconstruct(const TransformModelParams& params, const Matrix& x);

// Each loss optionally accumulates `scale * dLoss/dParams` into `grads`,
// which must have the shape of `params`.

/// Mean L1 data reconstruction through both levels.
double loss_data_recon(const TransformModelParams& params, const Matrix& x,
                       TransformModelParams* grads = nullptr, double scale = 1.0);

/// Sum of the latent cycle-consistency L1 terms with prior draws.
double loss_factor_recon(const TransformModelParams& params, const Matrix& x, const PriorDraw& priors,
                         TransformModelParams* grads = nullptr, double scale = 1.0);

template <std::uniform_random_bit_generator Rng>
double loss_factor_recon(const TransformModelParams& params, const Matrix& x, Rng& rng) {
  return loss_factor_recon(params, x, draw_priors(params.shape, x.cols(), rng));
}

/// Mean binary cross-entropy of h(E_a(E_m(x))) against (z+1)/2.
double loss_sensitive(const TransformModelParams& params, const Matrix& x,
                      std::span<const int> sensitives, TransformModelParams* grads = nullptr,
                      double scale = 1.0);

/// Share of columns where h(E_a(E_m(x))) >= 0.5 matches z = +1.
double sensitive_accuracy(const TransformModelParams& params, const Batch& batch);

inline constexpr double kDiscriminatorClamp = 1e-6;

struct AdversarialLoss {
  /// Sum over both levels of mean log(1 - D(fake)).
  double generator_loss = 0.0;
  /// Negated sum over both levels of mean log D(real) + mean log(1 - D(fake)).
  double discriminator_loss = 0.0;
};

/// `disc_grads` receives the gradient of discriminator_loss (discriminators
/// only); `gen_grads` that of generator_loss (encoders and decoders only).
AdversarialLoss loss_adversarial(const TransformModelParams& params, const Matrix& x,
                                 const PriorDraw& priors,
                                 TransformModelParams* disc_grads = nullptr,
                                 TransformModelParams* gen_grads = nullptr, double scale = 1.0);

template <std::uniform_random_bit_generator Rng>
AdversarialLoss loss_adversarial(const TransformModelParams& params, const Matrix& x, Rng& rng) {
  return loss_adversarial(params, x, draw_priors(params.shape, x.cols(), rng));
}

struct TransformTrainConfig {
  double beta1 = 10.0;  // data reconstruction
  double beta2 = 1.0;   // factor reconstruction
  double beta3 = 1.0;   // sensitiveness
  double beta4 = 1.0;   // adversarial
  double lr_discriminator = 1e-4;
  double lr_autoencoder = 1e-4;
  double lr_sensitive = 1e-4;
  /// Also pass beta3 * L_sens into E_m and E_a during the encoder step, so
  /// that the sensitive code carries z.
  bool sensitive_to_encoders = true;
  std::size_t iterations = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  TransformShape shape;  // input_dim is taken from the data

  void validate() const;
};

struct TransformTraceRow {
  std::size_t iteration = 0;
  double data_recon = 0;
  double factor_recon = 0;
  double sensitive = 0;
  double generator = 0;
  double discriminator = 0;
};

struct TrainedTransform {
  TransformModelParams params;
  std::vector<TransformTraceRow> trace;
};

/// Alternating minibatch updates: discriminators on beta4 * L_adv, encoders
/// and decoders on beta1 * L_data + beta2 * L_factor (+ beta3 * L_sens on
/// E_m, E_a when enabled), h on beta3 * L_sens.
/// Throws NonFiniteLoss.
TrainedTransform train_transform(std::span<const DomainDataset> datasets,
                                 const TransformTrainConfig& config);

struct AugmentedBatch {
  Matrix features;
  std::vector<int> sensitive;
  std::vector<int> labels;
};

/// Synthetic-domain copy: semantic code kept, sensitive and style codes drawn
/// from their priors, z' = +1 iff h(a') >= 0.5, labels unchanged.
AugmentedBatch augment(const TransformModelParams& params, const Batch& batch,
                       const PriorDraw& priors);
template <std::uniform_random_bit_generator Rng>
AugmentedBatch augment(const TransformModelParams& params, const Batch& batch, Rng& rng) {
  return augment(params, batch, draw_priors(params.shape, batch.size(), rng));
}

struct AugmentedExample {
  Vector features;
  int sensitive = 1;
  int label = 0;
};

template <std::uniform_random_bit_generator Rng>
AugmentedExample augment(const TransformModelParams& params, const Vector& x, int z, int y, Rng& rng) {
  Batch one{x, {z}, {y}};
  auto out = augment(params, one, rng);
  return {out.features.col(0), out.sensitive[0], out.labels[0]};
}

/// Style-only copy x' = G_o(E_m(x), s') keeping z; used when the inner level
/// is ablated.
AugmentedBatch augment_style_only(const TransformModelParams& params, const Batch& batch,
                                  const Matrix& style_draw);

/// Checkpoint container: JSON with format tag, version, shape and weights.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j, const std::vector<int>& expected_widths);
void save_checkpoint(const TrainedTransform& model, const TransformTrainConfig& config,
                     const std::filesystem::path& path);
TransformModelParams load_transform_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const TransformTrainConfig& config);
void write_trace_csv(std::span<const TransformTraceRow> trace, const std::filesystem::path& path);

}  // namespace fedora
