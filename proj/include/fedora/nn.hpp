#pragma once

// Small dense networks with hand-written reverse mode. Batches are stored
// column-wise: an input of shape (in_dim x n) maps to (out_dim x n).

#include <cmath>
#include <concepts>
#include <random>
#include <string>
#include <vector>

#include "fedora/errors.hpp"
#include "fedora/types.hpp"

namespace fedora::nn {

template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weight;  // out x in
  VectorX<Scalar> bias;    // out
};

/// Intermediate values of one forward pass, consumed by backward().
template <typename Scalar>
struct MlpTape {
  std::vector<MatrixX<Scalar>> inputs;
  std::vector<MatrixX<Scalar>> pre_activations;
};

/// Fully connected network: ReLU on every hidden layer, identity on the
/// output layer. `widths` lists input, hidden and output sizes.
template <typename Scalar>
class Mlp {
 public:
  using Mat = MatrixX<Scalar>;

  Mlp() = default;
  explicit Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw DimensionMismatch("Mlp: need at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      layers_.push_back({Mat::Zero(widths_[l + 1], widths_[l]), VectorX<Scalar>::Zero(widths_[l + 1])});
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  template <std::uniform_random_bit_generator Rng>
  void initialize(Rng& rng) {
    for (auto& layer : layers_) {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(layer.weight.cols()));
      std::uniform_real_distribution<Scalar> dist(-bound, bound);
      for (Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = dist(rng);
      for (Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] = dist(rng);
    }
  }

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
  int output_dim() const { return widths_.empty() ? 0 : widths_.back(); }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }

  Mlp zeros_like() const { return Mlp(widths_); }

  void set_zero() {
    for (auto& layer : layers_) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& layer : layers_) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  }

  Mat forward(const Mat& input) const {
    check_input(input);
    Mat h = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat pre = (layers_[l].weight * h).colwise() + layers_[l].bias;
      h = l + 1 < layers_.size() ? Mat(pre.cwiseMax(Scalar(0))) : std::move(pre);
    }
    return h;
  }

  Mat forward(const Mat& input, MlpTape<Scalar>& tape) const {
    check_input(input);
    tape.inputs.clear();
    tape.pre_activations.clear();
    Mat h = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      tape.inputs.push_back(h);
      Mat pre = (layers_[l].weight * h).colwise() + layers_[l].bias;
      h = l + 1 < layers_.size() ? Mat(pre.cwiseMax(Scalar(0))) : pre;
      tape.pre_activations.push_back(std::move(pre));
    }
    return h;
  }

  /// Accumulates parameter gradients into `grads` (same shape as *this) and
  /// returns the gradient with respect to the input.
  Mat backward(const MlpTape<Scalar>& tape, const Mat& grad_output, Mlp& grads) const {
    Mat g = grad_output;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (l + 1 < layers_.size()) {
        g = g.cwiseProduct((tape.pre_activations[l].array() > Scalar(0)).template cast<Scalar>().matrix());
      }
      grads.layers_[l].weight.noalias() += g * tape.inputs[l].transpose();
      grads.layers_[l].bias += g.rowwise().sum();
      g = layers_[l].weight.transpose() * g;
    }
    return g;
  }

  /// this += scale * other, for gradient bookkeeping.
  void add_scaled(const Mlp& other, Scalar scale) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight += scale * other.layers_[l].weight;
      layers_[l].bias += scale * other.layers_[l].bias;
    }
  }

 private:
  void check_input(const Mat& input) const {
    if (input.rows() != input_dim()) {
      throw DimensionMismatch("Mlp: input has " + std::to_string(input.rows()) +
                              " rows, expected " + std::to_string(input_dim()));
    }
  }

  std::vector<int> widths_;
  std::vector<DenseLayer<Scalar>> layers_;
};

template <typename Scalar>
struct AdamOptions {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

/// Bias-corrected Adam over every layer of one network.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp<Scalar>& like, AdamOptions<Scalar> options)
      : options_(options), first_(like.zeros_like()), second_(like.zeros_like()) {}

  /// Descends along `grads`.
  void step(Mlp<Scalar>& params, const Mlp<Scalar>& grads) {
    ++steps_;
    const Scalar correction1 = Scalar(1) - std::pow(options_.beta1, static_cast<Scalar>(steps_));
    const Scalar correction2 = Scalar(1) - std::pow(options_.beta2, static_cast<Scalar>(steps_));
    const Scalar step_size = options_.learning_rate / correction1;
    auto update = [&](auto& value, auto& m, auto& v, const auto& g) {
      m = options_.beta1 * m + (Scalar(1) - options_.beta1) * g;
      v.array() = options_.beta2 * v.array() + (Scalar(1) - options_.beta2) * g.array().square();
      value.array() -= step_size * m.array() / ((v.array() / correction2).sqrt() + options_.epsilon);
    };
    auto& p = params.layers();
    auto& m = first_.layers();
    auto& v = second_.layers();
    const auto& g = grads.layers();
    for (std::size_t l = 0; l < p.size(); ++l) {
      update(p[l].weight, m[l].weight, v[l].weight, g[l].weight);
      update(p[l].bias, m[l].bias, v[l].bias, g[l].bias);
    }
  }

  long steps() const { return steps_; }

 private:
  AdamOptions<Scalar> options_{};
  Mlp<Scalar> first_;
  Mlp<Scalar> second_;
  long steps_ = 0;
};

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  return logits.unaryExpr([](Scalar v) {
    return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v))
                          : std::exp(v) / (Scalar(1) + std::exp(v));
  });
}

/// log(1 + exp(v)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar v) {
  return v > Scalar(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

/// Column-wise softmax.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

/// Column-wise log-softmax.
template <typename Derived>
MatrixX<typename Derived::Scalar> log_softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> shifted = logits.rowwise() - logits.colwise().maxCoeff();
  const RowVectorX<Scalar> log_norm = shifted.array().exp().colwise().sum().log().matrix();
  shifted.rowwise() -= log_norm;
  return shifted;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> stack_rows(const Eigen::MatrixBase<Derived>& top,
                                             const MatrixX<typename Derived::Scalar>& bottom) {
  MatrixX<typename Derived::Scalar> out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace fedora::nn
