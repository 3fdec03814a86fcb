#include <doctest.h>

#include <string>

#include "fedora/errors.hpp"
#include "fedora/run_config.hpp"
#include "test_support.hpp"

using namespace fedora;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults and sections") {
  const auto c = parse_run_config(
      "seed = 7\nout = runs/a\n"
      "[data]\nn_per_domain = 500\n"
      "[transform]\nbeta3 = 10\niterations = 30\n"
      "[fedora]\nmode = no-t\nhidden = 16,8\nlambda2 = 0.5\nfreeze_lambda2 = true\n"
      "[experiment]\nname = demo\nrepeats = 2\nsweep = 0.1, 1\n"
      "[audit]\ncells = 4\n");
  CHECK(c.seed == 7);
  CHECK(c.out == "runs/a");
  CHECK(c.n_per_domain == 500);
  CHECK(c.transform.beta3 == 10.0);
  CHECK(c.transform.iterations == 30);
  CHECK(c.fedora.mode == TrainMode::ablate_no_T);
  CHECK(c.fedora.hidden == std::vector<int>{16, 8});
  CHECK(c.fedora.initial.lambda2 == 0.5);
  CHECK(c.fedora.freeze_lambda2);
  CHECK(c.experiment == "demo");
  CHECK(c.repeats == 2);
  CHECK(c.sweep == std::vector<double>{0.1, 1.0});
  CHECK(c.audit_cells == 4);
  CHECK(c.resolved_data_path() == std::filesystem::path("runs/a/data/benchmark.csv"));

  const auto d = parse_run_config("");
  CHECK(d.repeats == 3);
  CHECK(d.sweep == default_sweep_values());
}

TEST_CASE("unknown keys and bad values name the key") {
  CHECK(error_of("[fedora]\nlambda3 = 1\n").find("fedora.lambda3") != std::string::npos);
  CHECK(error_of("colour = red\n").find("colour") != std::string::npos);
  CHECK(error_of("[nowhere]\nseed = 1\n").find("nowhere.seed") != std::string::npos);
  CHECK(error_of("[fedora]\niterations = many\n").find("fedora.iterations") != std::string::npos);
  CHECK(error_of("[fedora]\nmode = half\n").find("half") != std::string::npos);
  CHECK(error_of("[experiment]\nrepeats = 0\n").find("repeats") != std::string::npos);
  CHECK(error_of("[data]\ntrain_fraction = 0.9\nvalidation_fraction = 0.2\n").find("fraction") != std::string::npos);
}

TEST_CASE("ini rendering round trips") {
  auto c = parse_run_config("seed = 3\n[fedora]\neta_primal = 0.0003\nhidden = 5\n[experiment]\nholdout = B\n");
  c.transform.beta1 = 0.1 + 0.2;  // not exactly representable in short form
  const auto text = to_ini(c);
  const auto back = parse_run_config(text);
  CHECK(to_ini(back) == text);
  CHECK(back.transform.beta1 == c.transform.beta1);
  CHECK(back.fedora.initial.eta_primal == 0.0003);
  CHECK(back.holdout == "B");

  testing::TempDir dir("manifest");
  c.out = dir.path();
  const auto path = write_manifest(c, "eval");
  CHECK(path == dir.path() / "run_manifest.eval.ini");
  CHECK(to_ini(load_run_config(path)) == to_ini(c));
  CHECK_THROWS_AS(load_run_config(dir.path() / "absent.ini"), MissingInput);
}

TEST_CASE("shipped configuration parses") {
  const auto c = load_run_config(FEDORA_SOURCE_DIR "/configs/toy.ini");
  CHECK(c.experiment == "toy");
  CHECK(c.n_per_domain == 10000);
  CHECK_NOTHROW(c.validate());
}
