#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fedora/errors.hpp"
#include "fedora/run_config.hpp"
#include "fedora/synthdata.hpp"
#include "fedora/transform_model.hpp"
#include "test_support.hpp"

using namespace fedora;

namespace {

TransformShape tiny_shape(int d = 2) {
  TransformShape s;
  s.input_dim = d;
  s.dim_m = 2;
  s.dim_c = 1;
  s.dim_a = 1;
  s.dim_s = 1;
  s.hidden_content = s.hidden_style = s.hidden_semantic = s.hidden_sensitive = 3;
  s.hidden_inner_dec = s.hidden_outer_dec = s.hidden_outer_disc = s.hidden_inner_disc = 3;
  s.outer_disc_outputs = 2;
  s.inner_disc_outputs = 2;
  return s;
}

TransformModelParams tiny_model(std::uint64_t seed, bool inner = true) {
  auto shape = tiny_shape();
  shape.inner_level = inner;
  std::mt19937_64 rng(seed);
  return TransformModelParams::random(shape, rng);
}

// Loop-based forward pass used as an oracle.
std::vector<double> scalar_forward(const Network& net, std::vector<double> v) {
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> next(static_cast<std::size_t>(layers[l].weight.rows()));
    for (Index i = 0; i < layers[l].weight.rows(); ++i) {
      double acc = layers[l].bias(i);
      for (Index j = 0; j < layers[l].weight.cols(); ++j) acc += layers[l].weight(i, j) * v[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = l + 1 < layers.size() ? std::max(acc, 0.0) : acc;
    }
    v = std::move(next);
  }
  return v;
}

std::vector<double> cat(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// Sets a one-hidden-layer network to copy input 0 to output 0 (other outputs 0).
void pass_through(Network& net) {
  for (auto& layer : net.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  auto& first = net.layers()[0];
  auto& second = net.layers()[1];
  first.weight(0, 0) = 1.0;
  first.weight(1, 0) = -1.0;
  second.weight(0, 0) = 1.0;
  second.weight(0, 1) = -1.0;
}

}  // namespace

TEST_CASE("encode and decode shapes and determinism") {
  const auto p = tiny_model(1);
  std::mt19937_64 rng(2);
  const Matrix x = testing::random_matrix(2, 5, rng);
  const auto f = encode(p, x);
  CHECK(f.content_m.rows() == 2);
  CHECK(f.semantic_c.rows() == 1);
  CHECK(f.sensitive_a.rows() == 1);
  CHECK(f.style_s.rows() == 1);
  CHECK(encode(p, x).semantic_c == f.semantic_c);
  const Matrix out = decode(p, f.semantic_c, f.sensitive_a, f.style_s);
  CHECK(out.rows() == 2);
  CHECK(decode(p, f.semantic_c, f.sensitive_a, f.style_s) == out);
  CHECK_THROWS_AS(encode(p, Matrix(Matrix::Zero(3, 1))), DimensionMismatch);
  const auto single = encode(p, Vector(x.col(0)));
  CHECK(single.content_m == f.content_m.col(0));
}

TEST_CASE("data reconstruction loss") {
  SUBCASE("identity autoencoder gives zero") {
    auto shape = tiny_shape(1);
    shape.dim_m = shape.dim_c = shape.dim_a = shape.dim_s = 1;
    auto p = TransformModelParams::zeros(shape);
    for (auto* net : {&p.enc_content, &p.enc_semantic, &p.dec_inner, &p.dec_outer}) pass_through(*net);
    Matrix x(1, 4);
    x << -1.5, 0.0, 0.25, 3.0;
    CHECK(loss_data_recon(p, x) == 0.0);
  }
  SUBCASE("hand-traced value") {
    const auto p = tiny_model(5);
    Matrix x(2, 2);
    x << 0.3, -0.7, 1.1, 0.4;
    double expected = 0;
    for (Index i = 0; i < 2; ++i) {
      const std::vector<double> xi{x(0, i), x(1, i)};
      const auto m = scalar_forward(p.enc_content, xi);
      const auto s = scalar_forward(p.enc_style, xi);
      const auto c = scalar_forward(p.enc_semantic, m);
      const auto a = scalar_forward(p.enc_sensitive, m);
      const auto m_hat = scalar_forward(p.dec_inner, cat(c, a));
      const auto x_hat = scalar_forward(p.dec_outer, cat(m_hat, s));
      expected += l1(x_hat, xi) + l1(m_hat, m);
    }
    CHECK(loss_data_recon(p, x) == doctest::Approx(expected / 2).epsilon(1e-12));
  }
  SUBCASE("nonnegative") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      CHECK(loss_data_recon(tiny_model(seed), testing::random_matrix(2, 8, rng)) >= 0.0);
    }
  }
}

TEST_CASE("factor reconstruction loss") {
  const auto p = tiny_model(6);
  Matrix x(2, 2);
  x << 0.5, -0.2, -0.9, 1.3;
  PriorDraw priors{Matrix(1, 2), Matrix(1, 2)};
  priors.sensitive_a << 0.4, -1.1;
  priors.style_s << -0.3, 0.8;
  double expected = 0;
  for (Index i = 0; i < 2; ++i) {
    const std::vector<double> xi{x(0, i), x(1, i)};
    const std::vector<double> ap{priors.sensitive_a(0, i)}, sp{priors.style_s(0, i)};
    const auto m = scalar_forward(p.enc_content, xi);
    const auto c = scalar_forward(p.enc_semantic, m);
    const auto u = scalar_forward(p.dec_inner, cat(c, ap));
    expected += l1(scalar_forward(p.enc_semantic, u), c);
    expected += l1(scalar_forward(p.enc_sensitive, u), ap);
    const auto x3 = scalar_forward(p.dec_outer, cat(m, sp));
    expected += l1(scalar_forward(p.enc_style, x3), sp);
    expected += l1(scalar_forward(p.enc_style, scalar_forward(p.dec_outer, cat(u, sp))), sp);
    expected += l1(scalar_forward(p.enc_content, x3), m);
  }
  CHECK(loss_factor_recon(p, x, priors) == doctest::Approx(expected / 2).epsilon(1e-12));
  std::mt19937_64 r1(3), r2(3);
  CHECK(loss_factor_recon(p, x, r1) == loss_factor_recon(p, x, r2));
  CHECK(loss_factor_recon(p, x, priors) >= 0.0);
}

TEST_CASE("sensitive loss") {
  auto shape = tiny_shape(1);
  shape.dim_m = shape.dim_c = shape.dim_a = shape.dim_s = 1;
  auto p = TransformModelParams::zeros(shape);
  Matrix x(1, 4);
  x << 1, -1, 1, -1;
  const std::vector<int> z{1, -1, 1, -1};
  CHECK(loss_sensitive(p, x, z) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  pass_through(p.enc_content);
  pass_through(p.enc_sensitive);
  p.sensitive_head.layers()[0].weight(0, 0) = 100.0;
  CHECK(loss_sensitive(p, x, z) < 1e-40);
  CHECK(loss_sensitive(p, x, z) >= 0.0);
  CHECK_THROWS_AS(loss_sensitive(p, x, std::vector<int>{1}), LengthMismatch);
}

TEST_CASE("adversarial loss at an indifferent discriminator") {
  auto p = tiny_model(7);
  for (auto* net : {&p.disc_outer, &p.disc_inner}) net->set_zero();
  std::mt19937_64 rng(1);
  const Matrix x = testing::random_matrix(2, 6, rng);
  const auto adv = loss_adversarial(p, x, rng);
  CHECK(adv.discriminator_loss == doctest::Approx(4 * std::numbers::ln2).epsilon(1e-14));
  CHECK(adv.generator_loss == doctest::Approx(-2 * std::numbers::ln2).epsilon(1e-14));

  // saturated discriminators stay finite through the clamp
  for (auto* net : {&p.disc_outer, &p.disc_inner}) net->layers().back().bias.setConstant(1e4);
  const auto sat = loss_adversarial(p, x, rng);
  CHECK(std::isfinite(sat.discriminator_loss));
  CHECK(std::isfinite(sat.generator_loss));

  std::mt19937_64 r1(9), r2(9);
  const auto q = tiny_model(8);
  CHECK(loss_adversarial(q, x, r1).discriminator_loss == loss_adversarial(q, x, r2).discriminator_loss);
}

TEST_CASE("transform loss gradients match finite differences") {
  for (bool inner : {true, false}) {
    CAPTURE(inner);
    auto p = tiny_model(21, inner);
    std::mt19937_64 rng(4);
    const Matrix x = testing::random_matrix(2, 6, rng);
    const auto priors = draw_priors(p.shape, 6, rng);
    const std::vector<int> z{1, -1, 1, 1, -1, -1};

    auto all = [](TransformModelParams& q) {
      std::vector<Network*> v;
      for (auto* net : q.networks()) v.push_back(net);
      return v;
    };
    auto all_const = [](const TransformModelParams& q) {
      std::vector<const Network*> v;
      for (const auto* net : q.networks()) v.push_back(net);
      return v;
    };

    auto g = p.zeros_like();
    loss_data_recon(p, x, &g, 1.0);
    CHECK(testing::check_gradients<double>(all(p), all_const(g), [&] { return loss_data_recon(p, x); }).relative_error < 1e-4);

    g = p.zeros_like();
    loss_factor_recon(p, x, priors, &g, 1.0);
    CHECK(testing::check_gradients<double>(all(p), all_const(g), [&] { return loss_factor_recon(p, x, priors); })
              .relative_error < 1e-4);

    if (inner) {
      g = p.zeros_like();
      loss_sensitive(p, x, z, &g, 1.0);
      CHECK(testing::check_gradients<double>(all(p), all_const(g), [&] { return loss_sensitive(p, x, z); })
                .relative_error < 1e-4);
    }

    auto dg = p.zeros_like();
    auto gg = p.zeros_like();
    loss_adversarial(p, x, priors, &dg, &gg, 1.0);
    std::vector<Network*> disc_nets{&p.disc_outer, &p.disc_inner};
    std::vector<const Network*> disc_grads{&dg.disc_outer, &dg.disc_inner};
    CHECK(testing::check_gradients<double>(disc_nets, disc_grads,
                                           [&] { return loss_adversarial(p, x, priors).discriminator_loss; })
              .relative_error < 1e-4);
    // generator side: discriminator weights held fixed
    std::vector<Network*> gen_nets{&p.enc_content, &p.enc_semantic, &p.dec_inner, &p.dec_outer};
    std::vector<const Network*> gen_grads{&gg.enc_content, &gg.enc_semantic, &gg.dec_inner, &gg.dec_outer};
    CHECK(testing::check_gradients<double>(gen_nets, gen_grads, [&] { return loss_adversarial(p, x, priors).generator_loss; })
              .relative_error < 1e-4);
    // discriminator gradients never touch the generator and vice versa
    CHECK(dg.enc_content.layers()[0].weight.isZero());
    CHECK(gg.disc_outer.layers()[0].weight.isZero());
  }
}

TEST_CASE("augmentation contract") {
  std::mt19937_64 rng(3);
  auto p = tiny_model(31);
  p.sensitive_head.layers()[0].bias.setZero();
  p.sensitive_head.layers()[0].weight(0, 0) = 1.5;
  const Vector x = Vector::Constant(2, 0.4);
  int positives = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto out = augment(p, x, -1, 1, rng);
    CHECK(out.label == 1);
    CHECK((out.sensitive == 1 || out.sensitive == -1));
    positives += out.sensitive == 1;
  }
  CHECK(positives >= 50);
  CHECK(positives <= 950);

  Batch b{testing::random_matrix(2, 5, rng), {1, -1, 1, -1, 1}, {0, 1, 1, 0, 1}};
  const auto aug = augment(p, b, rng);
  CHECK(aug.labels == b.labels);
  CHECK(aug.features.cols() == 5);
  const auto style_only = augment_style_only(tiny_model(31, false), b, Matrix::Zero(1, 5));
  CHECK(style_only.sensitive == b.sensitive);
  CHECK(style_only.labels == b.labels);
  CHECK_THROWS_AS(augment(tiny_model(31, false), b, rng), DimensionMismatch);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("transform_ckpt");
  TransformTrainConfig cfg;
  cfg.shape = tiny_shape();
  cfg.iterations = 5;
  const auto data = gen_benchmark(default_benchmark(40, 1));
  std::vector<DomainDataset> two{data[0], data[1]};
  cfg.shape.input_dim = 8;
  const auto trained = train_transform(two, cfg);
  const auto path = dir.path() / "t.json";
  save_checkpoint(trained, cfg, path);
  const auto back = load_transform_checkpoint(path);
  const auto a = trained.params.networks();
  const auto b = back.networks();
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t l = 0; l < a[k]->layers().size(); ++l) {
      CHECK(a[k]->layers()[l].weight == b[k]->layers()[l].weight);
      CHECK(a[k]->layers()[l].bias == b[k]->layers()[l].bias);
    }
  }
  {
    std::ofstream out(path);
    out << R"({"format": "something.else", "version": 1})";
  }
  CHECK_THROWS_AS(load_transform_checkpoint(path), CheckpointError);
  CHECK_THROWS_AS(load_transform_checkpoint(dir.path() / "none.json"), MissingInput);
}

namespace {

struct ToyFixture {
  std::vector<DomainDataset> train, test;
  TransformTrainConfig config;
  TrainedTransform model;
};

// Trained once; same transform settings as configs/toy.ini.
const ToyFixture& toy_fixture() {
  static const ToyFixture fixture = [] {
    ToyFixture f;
    for (const auto& d : gen_benchmark(default_benchmark(3000, 12))) {
      auto s = split(d, {0.6, 0.2, 4});
      f.train.push_back(s.train);
      f.test.push_back(s.test);
    }
    f.config = load_run_config(FEDORA_SOURCE_DIR "/configs/toy.ini").transform;
    f.config.seed = 77;
    f.model = train_transform(f.train, f.config);
    return f;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("transform training is seeded") {
  const auto& f = toy_fixture();
  auto cfg = f.config;
  cfg.iterations = 50;
  const auto a = train_transform(f.train, cfg);
  const auto b = train_transform(f.train, cfg);
  REQUIRE(a.trace.size() == 50);
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].data_recon == b.trace[k].data_recon);
    CHECK(a.trace[k].discriminator == b.trace[k].discriminator);
  }
}

TEST_CASE("trained transform reconstructs held-out data") {
  const auto& f = toy_fixture();
  REQUIRE(f.model.trace.size() == f.config.iterations);
  const Batch b = pool(f.test);
  const Matrix err = (reconstruct(f.model.params, b.features) - b.features).cwiseAbs();
  for (Index j = 0; j < b.dim(); ++j) {
    const double range = b.features.row(j).maxCoeff() - b.features.row(j).minCoeff();
    CHECK(err.row(j).mean() < 0.2 * range);
  }
}

TEST_CASE("style codes separate domains") {
  const auto& f = toy_fixture();
  // 200 held-out pairs within domain R and across R and G
  const Matrix sr = encode(f.model.params, to_batch(f.test[0]).features).style_s;
  const Matrix sg = encode(f.model.params, to_batch(f.test[1]).features).style_s;
  double same = 0, cross = 0;
  for (Index k = 0; k < 200; ++k) {
    same += (sr.col(k) - sr.col(k + 200)).norm();
    cross += (sr.col(k) - sg.col(k)).norm();
  }
  CHECK(same < cross);
}
