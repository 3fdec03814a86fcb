#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fedora/nn.hpp"
#include "fedora/types.hpp"

namespace fedora::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("fedora_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct GradientCheck {
  double relative_error = 0;  // ||a - n|| / max(||a|| + ||n||, tiny)
  std::size_t checked = 0;
};

/// Central differences with step 1e-5 over every weight and bias of `nets`.
/// `loss` re-evaluates the objective with the current (perturbed) weights;
/// `analytic` lists the matching gradient networks.
template <class Scalar>
GradientCheck check_gradients(const std::vector<nn::Mlp<Scalar>*>& nets,
                              const std::vector<const nn::Mlp<Scalar>*>& analytic,
                              const std::function<double()>& loss, double step = 1e-5) {
  double diff2 = 0, a2 = 0, n2 = 0;
  GradientCheck out;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    for (std::size_t l = 0; l < nets[k]->layers().size(); ++l) {
      auto& layer = nets[k]->layers()[l];
      const auto& g = analytic[k]->layers()[l];
      auto probe = [&](Scalar& w, Scalar grad) {
        const Scalar keep = w;
        w = keep + static_cast<Scalar>(step);
        const double up = loss();
        w = keep - static_cast<Scalar>(step);
        const double down = loss();
        w = keep;
        const double numeric = (up - down) / (2 * step);
        diff2 += (numeric - static_cast<double>(grad)) * (numeric - static_cast<double>(grad));
        a2 += static_cast<double>(grad) * static_cast<double>(grad);
        n2 += numeric * numeric;
        ++out.checked;
      };
      for (Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], g.weight.data()[i]);
      for (Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias.data()[i], g.bias.data()[i]);
    }
  }
  out.relative_error = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), 1e-12);
  return out;
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  return m;
}

}  // namespace fedora::testing
