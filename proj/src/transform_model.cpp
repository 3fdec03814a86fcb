#include "fedora/transform_model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "fedora/errors.hpp"

namespace fedora {

using nn::stack_rows;
using Tape = nn::MlpTape<double>;

void TransformShape::validate() const {
  const int dims[] = {input_dim,        dim_m,            dim_c,           dim_a,
                      dim_s,            hidden_content,   hidden_style,    hidden_semantic,
                      hidden_sensitive, hidden_inner_dec, hidden_outer_dec, hidden_outer_disc,
                      hidden_inner_disc, outer_disc_outputs, inner_disc_outputs};
  for (int v : dims) {
    if (v <= 0) throw DimensionMismatch("TransformShape: every width must be positive");
  }
}

TransformModelParams TransformModelParams::zeros(const TransformShape& s) {
  s.validate();
  TransformModelParams p;
  p.shape = s;
  p.enc_content = Network({s.input_dim, s.hidden_content, s.dim_m});
  p.enc_style = Network({s.input_dim, s.hidden_style, s.dim_s});
  p.enc_semantic = Network({s.dim_m, s.hidden_semantic, s.dim_c});
  p.enc_sensitive = Network({s.dim_m, s.hidden_sensitive, s.dim_a});
  p.dec_inner = Network({s.dim_c + s.dim_a, s.hidden_inner_dec, s.dim_m});
  p.dec_outer = Network({s.dim_m + s.dim_s, s.hidden_outer_dec, s.input_dim});
  p.disc_outer = Network({s.input_dim, s.hidden_outer_disc, s.outer_disc_outputs});
  p.disc_inner = Network({s.dim_m, s.hidden_inner_disc, s.inner_disc_outputs});
  p.sensitive_head = Network({s.dim_a, 1});
  return p;
}

std::vector<Network*> TransformModelParams::networks() {
  return {&enc_content, &enc_style, &enc_semantic, &enc_sensitive, &dec_inner,
          &dec_outer,   &disc_outer, &disc_inner,  &sensitive_head};
}

std::vector<const Network*> TransformModelParams::networks() const {
  return {&enc_content, &enc_style, &enc_semantic, &enc_sensitive, &dec_inner,
          &dec_outer,   &disc_outer, &disc_inner,  &sensitive_head};
}

bool TransformModelParams::all_finite() const {
  for (const auto* net : networks()) {
    if (!net->all_finite()) return false;
  }
  return true;
}

namespace {

void check_rows(const Matrix& m, int rows, const char* what) {
  if (m.rows() != rows) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(rows) +
                            " rows, got " + std::to_string(m.rows()));
  }
}

void require_inner(const TransformModelParams& p, const char* who) {
  if (!p.shape.inner_level) {
    throw DimensionMismatch(std::string(who) + ": model was built without the inner level");
  }
}

/// Mean over columns of the L1 norm of `diff`; sign(diff) * coef in `grad`.
double l1_mean(const Matrix& diff, Matrix* grad, double coef) {
  const double n = static_cast<double>(diff.cols());
  if (grad) *grad = (coef / n) * diff.array().sign().matrix();
  return diff.cwiseAbs().sum() / n;
}

Matrix l1_grad(const Matrix& diff, double coef) {
  return (coef / static_cast<double>(diff.cols())) * diff.array().sign().matrix();
}

/// Clamped sigmoid probabilities of discriminator logits.
struct DiscriminatorOutput {
  Matrix prob;    // clamped
  Matrix active;  // 1 where the clamp is not binding
};

DiscriminatorOutput discriminate(const Matrix& logits) {
  const Matrix raw = nn::sigmoid(logits);
  DiscriminatorOutput out;
  out.prob = raw.cwiseMax(kDiscriminatorClamp).cwiseMin(1.0 - kDiscriminatorClamp);
  out.active = ((raw.array() > kDiscriminatorClamp) && (raw.array() < 1.0 - kDiscriminatorClamp))
                   .cast<double>()
                   .matrix();
  return out;
}

}  // namespace

LatentFactors encode(const TransformModelParams& params, const Vector& x) {
  const auto f = encode(params, Matrix(x));
  LatentFactors out;
  out.content_m = f.content_m.col(0);
  out.style_s = f.style_s.col(0);
  if (params.shape.inner_level) {
    out.semantic_c = f.semantic_c.col(0);
    out.sensitive_a = f.sensitive_a.col(0);
  }
  return out;
}

BatchFactors encode(const TransformModelParams& params, const Matrix& x) {
  check_rows(x, params.shape.input_dim, "encode");
  BatchFactors f;
  f.content_m = params.enc_content.forward(x);
  f.style_s = params.enc_style.forward(x);
  if (params.shape.inner_level) {
    f.semantic_c = params.enc_semantic.forward(f.content_m);
    f.sensitive_a = params.enc_sensitive.forward(f.content_m);
  }
  return f;
}

Vector decode(const TransformModelParams& params, const Vector& c, const Vector& a, const Vector& s) {
  return decode(params, Matrix(c), Matrix(a), Matrix(s)).col(0);
}

Matrix decode(const TransformModelParams& params, const Matrix& c, const Matrix& a, const Matrix& s) {
  require_inner(params, "decode");
  check_rows(c, params.shape.dim_c, "decode: semantic factor");
  check_rows(a, params.shape.dim_a, "decode: sensitive factor");
  check_rows(s, params.shape.dim_s, "decode: style factor");
  if (a.cols() != c.cols() || s.cols() != c.cols()) throw DimensionMismatch("decode: column counts differ");
  const Matrix m = params.dec_inner.forward(stack_rows(c, a));
  return params.dec_outer.forward(stack_rows(m, s));
}

Matrix reconstruct(const TransformModelParams& params, const Matrix& x) {
  const auto f = encode(params, x);
  if (!params.shape.inner_level) return params.dec_outer.forward(stack_rows(f.content_m, f.style_s));
  return decode(params, f.semantic_c, f.sensitive_a, f.style_s);
}

double loss_data_recon(const TransformModelParams& P, const Matrix& x, TransformModelParams* G,
                       double scale) {
  check_rows(x, P.shape.input_dim, "loss_data_recon");
  const int dm = P.shape.dim_m;
  const int ds = P.shape.dim_s;
  Tape tm, ts, tgo;
  const Matrix m = P.enc_content.forward(x, tm);
  const Matrix s = P.enc_style.forward(x, ts);

  if (!P.shape.inner_level) {
    const Matrix diff = P.dec_outer.forward(stack_rows(m, s), tgo) - x;
    Matrix g;
    const double loss = l1_mean(diff, G ? &g : nullptr, scale);
    if (G) {
      const Matrix g_ms = P.dec_outer.backward(tgo, g, G->dec_outer);
      P.enc_content.backward(tm, g_ms.topRows(dm), G->enc_content);
      P.enc_style.backward(ts, g_ms.bottomRows(ds), G->enc_style);
    }
    return loss;
  }

  Tape tc, ta, tgi;
  const Matrix c = P.enc_semantic.forward(m, tc);
  const Matrix a = P.enc_sensitive.forward(m, ta);
  const Matrix m_hat = P.dec_inner.forward(stack_rows(c, a), tgi);
  const Matrix x_hat = P.dec_outer.forward(stack_rows(m_hat, s), tgo);
  const Matrix outer_diff = x_hat - x;
  const Matrix inner_diff = m_hat - m;
  const double loss = l1_mean(outer_diff, nullptr, 1.0) + l1_mean(inner_diff, nullptr, 1.0);
  if (G) {
    const Matrix g_inner = l1_grad(inner_diff, scale);
    const Matrix g_ms = P.dec_outer.backward(tgo, l1_grad(outer_diff, scale), G->dec_outer);
    const Matrix g_m_hat = g_ms.topRows(dm) + g_inner;
    Matrix g_m = -g_inner;
    const Matrix g_ca = P.dec_inner.backward(tgi, g_m_hat, G->dec_inner);
    g_m += P.enc_semantic.backward(tc, g_ca.topRows(P.shape.dim_c), G->enc_semantic);
    g_m += P.enc_sensitive.backward(ta, g_ca.bottomRows(P.shape.dim_a), G->enc_sensitive);
    P.enc_content.backward(tm, g_m, G->enc_content);
    P.enc_style.backward(ts, g_ms.bottomRows(ds), G->enc_style);
  }
  return loss;
}

double loss_factor_recon(const TransformModelParams& P, const Matrix& x, const PriorDraw& priors,
                         TransformModelParams* G, double scale) {
  check_rows(x, P.shape.input_dim, "loss_factor_recon");
  check_rows(priors.style_s, P.shape.dim_s, "loss_factor_recon: style prior");
  const int dm = P.shape.dim_m;
  const Matrix& s_prior = priors.style_s;

  Tape tm, tgo3, ts3, tm5;
  const Matrix m = P.enc_content.forward(x, tm);
  // style and content recovered from G_o(m, s')
  const Matrix x3 = P.dec_outer.forward(stack_rows(m, s_prior), tgo3);
  const Matrix diff3 = P.enc_style.forward(x3, ts3) - s_prior;
  const Matrix diff5 = P.enc_content.forward(x3, tm5) - m;
  double loss = l1_mean(diff3, nullptr, 1.0) + l1_mean(diff5, nullptr, 1.0);

  Matrix g_m;
  if (G) {
    Matrix g_x3 = P.enc_style.backward(ts3, l1_grad(diff3, scale), G->enc_style);
    const Matrix g5 = l1_grad(diff5, scale);
    g_x3 += P.enc_content.backward(tm5, g5, G->enc_content);
    g_m = P.dec_outer.backward(tgo3, g_x3, G->dec_outer).topRows(dm) - g5;
  }

  if (P.shape.inner_level) {
    check_rows(priors.sensitive_a, P.shape.dim_a, "loss_factor_recon: sensitive prior");
    const Matrix& a_prior = priors.sensitive_a;
    Tape tc, tgi, tc1, ta2, tgo4, ts4;
    const Matrix c = P.enc_semantic.forward(m, tc);
    const Matrix u = P.dec_inner.forward(stack_rows(c, a_prior), tgi);
    const Matrix diff1 = P.enc_semantic.forward(u, tc1) - c;
    const Matrix diff2 = P.enc_sensitive.forward(u, ta2) - a_prior;
    const Matrix x4 = P.dec_outer.forward(stack_rows(u, s_prior), tgo4);
    const Matrix diff4 = P.enc_style.forward(x4, ts4) - s_prior;
    loss += l1_mean(diff1, nullptr, 1.0) + l1_mean(diff2, nullptr, 1.0) + l1_mean(diff4, nullptr, 1.0);

    if (G) {
      const Matrix g1 = l1_grad(diff1, scale);
      Matrix g_u = P.enc_semantic.backward(tc1, g1, G->enc_semantic);
      g_u += P.enc_sensitive.backward(ta2, l1_grad(diff2, scale), G->enc_sensitive);
      const Matrix g_x4 = P.enc_style.backward(ts4, l1_grad(diff4, scale), G->enc_style);
      g_u += P.dec_outer.backward(tgo4, g_x4, G->dec_outer).topRows(dm);
      const Matrix g_c = P.dec_inner.backward(tgi, g_u, G->dec_inner).topRows(P.shape.dim_c) - g1;
      g_m += P.enc_semantic.backward(tc, g_c, G->enc_semantic);
    }
  }
  if (G) P.enc_content.backward(tm, g_m, G->enc_content);
  return loss;
}

double loss_sensitive(const TransformModelParams& P, const Matrix& x, std::span<const int> sensitives,
                      TransformModelParams* G, double scale) {
  check_rows(x, P.shape.input_dim, "loss_sensitive");
  if (static_cast<Index>(sensitives.size()) != x.cols()) {
    throw LengthMismatch("loss_sensitive: one sensitive value per column required");
  }
  if (!P.shape.inner_level) return 0.0;
  Tape tm, ta, th;
  const Matrix m = P.enc_content.forward(x, tm);
  const Matrix a = P.enc_sensitive.forward(m, ta);
  const Matrix logits = P.sensitive_head.forward(a, th);
  const double n = static_cast<double>(x.cols());
  RowVector target(x.cols());
  for (Index i = 0; i < x.cols(); ++i) target[i] = (sensitives[static_cast<std::size_t>(i)] + 1) / 2.0;
  double loss = 0.0;
  for (Index i = 0; i < x.cols(); ++i) loss += nn::softplus(logits(0, i)) - target[i] * logits(0, i);
  loss /= n;
  if (G) {
    const Matrix g_logits = (scale / n) * (Matrix(nn::sigmoid(logits)).row(0) - target);
    const Matrix g_a = P.sensitive_head.backward(th, g_logits, G->sensitive_head);
    const Matrix g_m = P.enc_sensitive.backward(ta, g_a, G->enc_sensitive);
    P.enc_content.backward(tm, g_m, G->enc_content);
  }
  return loss;
}

AdversarialLoss loss_adversarial(const TransformModelParams& P, const Matrix& x, const PriorDraw& priors,
                                 TransformModelParams* D, TransformModelParams* G, double scale) {
  check_rows(x, P.shape.input_dim, "loss_adversarial");
  check_rows(priors.style_s, P.shape.dim_s, "loss_adversarial: style prior");
  const bool inner = P.shape.inner_level;
  const int dm = P.shape.dim_m;

  Tape tm, tc, tgi, tgo;
  const Matrix m = P.enc_content.forward(x, tm);
  Matrix c, u;
  if (inner) {
    check_rows(priors.sensitive_a, P.shape.dim_a, "loss_adversarial: sensitive prior");
    c = P.enc_semantic.forward(m, tc);
    u = P.dec_inner.forward(stack_rows(c, priors.sensitive_a), tgi);
  }
  const Matrix& content_fake = inner ? u : m;
  const Matrix x_fake = P.dec_outer.forward(stack_rows(content_fake, priors.style_s), tgo);

  AdversarialLoss out;
  Matrix g_content_fake = Matrix::Zero(dm, x.cols());
  Matrix g_m_direct = Matrix::Zero(dm, x.cols());

  // Adds one level's terms. `fake_input_grad` receives dGen/d(fake input).
  auto level = [&](const Network& disc, Network* disc_grad, const Matrix& real, const Matrix& fake,
                   Matrix* fake_input_grad) {
    Tape tr, tf;
    const auto dr = discriminate(disc.forward(real, tr));
    const auto df = discriminate(disc.forward(fake, tf));
    const double count = static_cast<double>(dr.prob.size());
    const double log_real = dr.prob.array().log().sum() / count;
    const double log_fake = (1.0 - df.prob.array()).log().sum() / count;
    out.discriminator_loss -= log_real + log_fake;
    out.generator_loss += log_fake;
    const double k = scale / count;
    if (disc_grad) {
      const Matrix g_real = -k * (1.0 - dr.prob.array()).matrix().cwiseProduct(dr.active);
      const Matrix g_fake = k * df.prob.cwiseProduct(df.active);
      disc.backward(tr, g_real, *disc_grad);
      disc.backward(tf, g_fake, *disc_grad);
    }
    if (fake_input_grad) {
      Network scratch = disc.zeros_like();
      *fake_input_grad += disc.backward(tf, -k * df.prob.cwiseProduct(df.active), scratch);
    }
  };

  Matrix g_x_fake = Matrix::Zero(x.rows(), x.cols());
  level(P.disc_outer, D ? &D->disc_outer : nullptr, x, x_fake, G ? &g_x_fake : nullptr);
  if (inner) level(P.disc_inner, D ? &D->disc_inner : nullptr, m, u, G ? &g_content_fake : nullptr);

  if (G) {
    g_content_fake += P.dec_outer.backward(tgo, g_x_fake, G->dec_outer).topRows(dm);
    if (inner) {
      const Matrix g_c = P.dec_inner.backward(tgi, g_content_fake, G->dec_inner).topRows(P.shape.dim_c);
      g_m_direct += P.enc_semantic.backward(tc, g_c, G->enc_semantic);
    } else {
      g_m_direct += g_content_fake;
    }
    P.enc_content.backward(tm, g_m_direct, G->enc_content);
  }
  return out;
}

void TransformTrainConfig::validate() const {
  for (double b : {beta1, beta2, beta3, beta4}) {
    if (!(b >= 0.0)) throw ValueError("TransformTrainConfig: loss weights must be nonnegative");
  }
  for (double lr : {lr_discriminator, lr_autoencoder, lr_sensitive}) {
    if (!(lr > 0.0)) throw ValueError("TransformTrainConfig: learning rates must be positive");
  }
  if (iterations == 0 || batch_size == 0) {
    throw ValueError("TransformTrainConfig: iterations and batch_size must be positive");
  }
}

TrainedTransform train_transform(std::span<const DomainDataset> datasets,
                                 const TransformTrainConfig& config) {
  config.validate();
  if (datasets.empty()) throw EmptySources("train_transform: no source domains");
  const Batch all = pool(datasets);
  if (all.size() == 0) throw EmptySources("train_transform: source domains are empty");

  TransformShape shape = config.shape;
  shape.input_dim = static_cast<int>(all.dim());
  std::mt19937_64 init_rng(derive_seed(config.seed, "transform/init"));
  std::mt19937_64 batch_rng(derive_seed(config.seed, "transform/batches"));
  std::mt19937_64 prior_rng(derive_seed(config.seed, "transform/priors"));

  TrainedTransform result{TransformModelParams::random(shape, init_rng), {}};
  auto& P = result.params;

  auto make_adam = [](const Network& net, double lr) {
    nn::AdamOptions<double> opts;
    opts.learning_rate = lr;
    return nn::Adam<double>(net, opts);
  };
  auto disc_outer_opt = make_adam(P.disc_outer, config.lr_discriminator);
  auto disc_inner_opt = make_adam(P.disc_inner, config.lr_discriminator);
  std::vector<nn::Adam<double>> ae_opts;
  const std::vector<Network*> ae_nets{&P.enc_content, &P.enc_style, &P.enc_semantic,
                                      &P.enc_sensitive, &P.dec_inner, &P.dec_outer};
  for (auto* net : ae_nets) ae_opts.push_back(make_adam(*net, config.lr_autoencoder));
  auto head_opt = make_adam(P.sensitive_head, config.lr_sensitive);

  std::uniform_int_distribution<Index> pick(0, all.size() - 1);
  std::vector<Index> idx(config.batch_size);
  result.trace.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (auto& i : idx) i = pick(batch_rng);
    const Batch batch = gather(all, idx);
    const PriorDraw priors = draw_priors(shape, batch.size(), prior_rng);

    TransformTraceRow row;
    row.iteration = it;

    auto disc_grads = P.zeros_like();
    const auto adv = loss_adversarial(P, batch.features, priors, &disc_grads, nullptr, config.beta4);
    row.generator = adv.generator_loss;
    row.discriminator = adv.discriminator_loss;
    disc_outer_opt.step(P.disc_outer, disc_grads.disc_outer);
    if (shape.inner_level) disc_inner_opt.step(P.disc_inner, disc_grads.disc_inner);

    auto ae_grads = P.zeros_like();
    row.data_recon = loss_data_recon(P, batch.features, &ae_grads, config.beta1);
    row.factor_recon = loss_factor_recon(P, batch.features, priors, &ae_grads, config.beta2);
    if (config.sensitive_to_encoders && shape.inner_level) {
      loss_sensitive(P, batch.features, batch.sensitive, &ae_grads, config.beta3);
    }
    const std::vector<Network*> ae_grad_nets{&ae_grads.enc_content, &ae_grads.enc_style,
                                             &ae_grads.enc_semantic, &ae_grads.enc_sensitive,
                                             &ae_grads.dec_inner, &ae_grads.dec_outer};
    for (std::size_t k = 0; k < ae_nets.size(); ++k) {
      if (!shape.inner_level && (k == 2 || k == 3 || k == 4)) continue;
      ae_opts[k].step(*ae_nets[k], *ae_grad_nets[k]);
    }

    if (shape.inner_level) {
      auto head_grads = P.zeros_like();
      row.sensitive = loss_sensitive(P, batch.features, batch.sensitive, &head_grads, config.beta3);
      head_opt.step(P.sensitive_head, head_grads.sensitive_head);
    }

    for (double v : {row.data_recon, row.factor_recon, row.sensitive, row.generator, row.discriminator}) {
      if (!std::isfinite(v)) throw NonFiniteLoss("train_transform: non-finite loss", it);
    }
    result.trace.push_back(row);
  }
  if (!P.all_finite()) throw NonFiniteLoss("train_transform: non-finite weights", config.iterations);
  return result;
}

double sensitive_accuracy(const TransformModelParams& P, const Batch& batch) {
  require_inner(P, "sensitive_accuracy");
  check_rows(batch.features, P.shape.input_dim, "sensitive_accuracy");
  if (batch.size() == 0) throw TooSmall("sensitive_accuracy: empty batch");
  const Matrix logits = P.sensitive_head.forward(P.enc_sensitive.forward(P.enc_content.forward(batch.features)));
  Index hits = 0;
  for (Index i = 0; i < batch.size(); ++i) hits += (logits(0, i) >= 0.0) == (batch.sensitive[static_cast<std::size_t>(i)] == 1);
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

AugmentedBatch augment(const TransformModelParams& P, const Batch& batch, const PriorDraw& priors) {
  require_inner(P, "augment");
  check_rows(batch.features, P.shape.input_dim, "augment");
  const Matrix c = P.enc_semantic.forward(P.enc_content.forward(batch.features));
  AugmentedBatch out;
  out.features = decode(P, c, priors.sensitive_a, priors.style_s);
  const Matrix logits = P.sensitive_head.forward(priors.sensitive_a);
  out.sensitive.resize(static_cast<std::size_t>(batch.size()));
  for (Index i = 0; i < batch.size(); ++i) {
    // sigmoid(l) >= 0.5  <=>  l >= 0
    out.sensitive[static_cast<std::size_t>(i)] = logits(0, i) >= 0.0 ? 1 : -1;
  }
  out.labels = batch.labels;
  return out;
}

AugmentedBatch augment_style_only(const TransformModelParams& P, const Batch& batch,
                                  const Matrix& style_draw) {
  check_rows(batch.features, P.shape.input_dim, "augment_style_only");
  check_rows(style_draw, P.shape.dim_s, "augment_style_only: style draw");
  const Matrix m = P.enc_content.forward(batch.features);
  AugmentedBatch out;
  out.features = P.dec_outer.forward(stack_rows(m, style_draw));
  out.sensitive = batch.sensitive;
  out.labels = batch.labels;
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr const char* kTransformFormat = "fedora.transform";
constexpr int kCheckpointVersion = 1;

nlohmann::json shape_to_json(const TransformShape& s) {
  return {{"input_dim", s.input_dim},
          {"dim_m", s.dim_m},
          {"dim_c", s.dim_c},
          {"dim_a", s.dim_a},
          {"dim_s", s.dim_s},
          {"hidden_content", s.hidden_content},
          {"hidden_style", s.hidden_style},
          {"hidden_semantic", s.hidden_semantic},
          {"hidden_sensitive", s.hidden_sensitive},
          {"hidden_inner_dec", s.hidden_inner_dec},
          {"hidden_outer_dec", s.hidden_outer_dec},
          {"hidden_outer_disc", s.hidden_outer_disc},
          {"hidden_inner_disc", s.hidden_inner_disc},
          {"outer_disc_outputs", s.outer_disc_outputs},
          {"inner_disc_outputs", s.inner_disc_outputs},
          {"inner_level", s.inner_level}};
}

TransformShape shape_from_json(const nlohmann::json& j) {
  TransformShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.dim_m = j.at("dim_m").get<int>();
  s.dim_c = j.at("dim_c").get<int>();
  s.dim_a = j.at("dim_a").get<int>();
  s.dim_s = j.at("dim_s").get<int>();
  s.hidden_content = j.at("hidden_content").get<int>();
  s.hidden_style = j.at("hidden_style").get<int>();
  s.hidden_semantic = j.at("hidden_semantic").get<int>();
  s.hidden_sensitive = j.at("hidden_sensitive").get<int>();
  s.hidden_inner_dec = j.at("hidden_inner_dec").get<int>();
  s.hidden_outer_dec = j.at("hidden_outer_dec").get<int>();
  s.hidden_outer_disc = j.at("hidden_outer_disc").get<int>();
  s.hidden_inner_disc = j.at("hidden_inner_disc").get<int>();
  s.outer_disc_outputs = j.at("outer_disc_outputs").get<int>();
  s.inner_disc_outputs = j.at("inner_disc_outputs").get<int>();
  s.inner_level = j.at("inner_level").get<bool>();
  return s;
}

const char* const kNetworkNames[] = {"enc_content", "enc_style",  "enc_semantic",
                                     "enc_sensitive", "dec_inner", "dec_outer",
                                     "disc_outer",  "disc_inner", "sensitive_head"};

}  // namespace

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["widths"] = net.widths();
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    j["layers"].push_back(
        {{"weight", std::vector<double>(layer.weight.data(), layer.weight.data() + layer.weight.size())},
         {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
  }
  return j;
}

Network network_from_json(const nlohmann::json& j, const std::vector<int>& expected_widths) {
  const auto widths = j.at("widths").get<std::vector<int>>();
  if (widths != expected_widths) throw CheckpointError("checkpoint: network widths do not match shape");
  Network net(widths);
  const auto& layers = j.at("layers");
  if (layers.size() != net.layers().size()) throw CheckpointError("checkpoint: wrong layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto w = layers[l].at("weight").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    auto& layer = net.layers()[l];
    if (static_cast<Index>(w.size()) != layer.weight.size() || static_cast<Index>(b.size()) != layer.bias.size()) {
      throw CheckpointError("checkpoint: layer " + std::to_string(l) + " has the wrong size");
    }
    layer.weight = Eigen::Map<const Matrix>(w.data(), layer.weight.rows(), layer.weight.cols());
    layer.bias = Eigen::Map<const Vector>(b.data(), layer.bias.size());
  }
  return net;
}

nlohmann::json to_json(const TransformTrainConfig& c) {
  return {{"beta1", c.beta1},
          {"beta2", c.beta2},
          {"beta3", c.beta3},
          {"sensitive_to_encoders", c.sensitive_to_encoders},
          {"beta4", c.beta4},
          {"lr_discriminator", c.lr_discriminator},
          {"lr_autoencoder", c.lr_autoencoder},
          {"lr_sensitive", c.lr_sensitive},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"shape", shape_to_json(c.shape)}};
}

void save_checkpoint(const TrainedTransform& model, const TransformTrainConfig& config,
                     const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kTransformFormat;
  j["version"] = kCheckpointVersion;
  j["shape"] = shape_to_json(model.params.shape);
  j["config"] = to_json(config);
  auto nets = model.params.networks();
  for (std::size_t k = 0; k < nets.size(); ++k) j["networks"][kNetworkNames[k]] = network_to_json(*nets[k]);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

TransformModelParams load_transform_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kTransformFormat) throw CheckpointError(path.string() + ": not a transform checkpoint");
  if (j.value("version", -1) != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version");
  }
  try {
    auto params = TransformModelParams::zeros(shape_from_json(j.at("shape")));
    auto nets = params.networks();
    for (std::size_t k = 0; k < nets.size(); ++k) {
      *nets[k] = network_from_json(j.at("networks").at(kNetworkNames[k]), nets[k]->widths());
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void write_trace_csv(std::span<const TransformTraceRow> trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,L_data,L_factor,L_sens,L_gen,L_disc\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << format_double(r.data_recon) << ',' << format_double(r.factor_recon) << ','
        << format_double(r.sensitive) << ',' << format_double(r.generator) << ','
        << format_double(r.discriminator) << '\n';
  }
}

}  // namespace fedora
