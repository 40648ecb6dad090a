#pragma once

#include "phlearn/core.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace phl {

/// Fully connected tanh network with an affine output stage.
///
/// Parameters are read from a flat array laid out layer by layer as
/// [W (fan_out x fan_in, column major), b (fan_out)], so one Mlp can be
/// evaluated against any slice of a ParamVector.
class Mlp {
 public:
  Mlp() = default;
  Mlp(Index input_dim, Index hidden_dim, Index output_dim, Index hidden_layers = 1);

  Index input_dim() const { return input_dim_; }
  Index hidden_dim() const { return hidden_dim_; }
  Index output_dim() const { return output_dim_; }
  Index hidden_layers() const { return hidden_layers_; }
  Index param_count() const;

  /// Generic forward pass. Scalar may be an automatic-differentiation type,
  /// in which case the weights carry derivatives as well.
  template <typename Scalar>
  VectorX<Scalar> forward(const VectorX<Scalar>& input, const Scalar* w) const;

  struct Evaluation {
    Vector output;
    Matrix d_input;   // output_dim x input_dim
    Matrix d_params;  // output_dim x param_count
  };

  /// Output together with both Jacobians, accumulated by the chain rule.
  Evaluation eval_with_jacobians(const Vector& input, const double* w) const;
  Evaluation eval_with_jacobians(const Vector& input, const Vector& w) const {
    require_dim(w.size(), param_count(), "mlp parameters");
    return eval_with_jacobians(input, w.data());
  }

  /// Gradient of a scalar-output network with respect to its input.
  template <typename Scalar>
  VectorX<Scalar> input_gradient(const VectorX<Scalar>& input, const Scalar* w) const;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  Vector initial_params(std::mt19937_64& rng) const;

 private:
  Index layer_in(Index layer) const { return layer == 0 ? input_dim_ : hidden_dim_; }
  Index layer_out(Index layer) const {
    return layer == hidden_layers_ ? output_dim_ : hidden_dim_;
  }

  Index input_dim_ = 0;
  Index hidden_dim_ = 0;
  Index output_dim_ = 0;
  Index hidden_layers_ = 1;
};

template <typename Scalar>
VectorX<Scalar> Mlp::forward(const VectorX<Scalar>& input, const Scalar* w) const {
  using std::tanh;
  require_dim(input.size(), input_dim_, "mlp input");
  VectorX<Scalar> a = input;
  const Scalar* p = w;
  for (Index layer = 0; layer <= hidden_layers_; ++layer) {
    const Index fan_in = layer_in(layer);
    const Index fan_out = layer_out(layer);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> W(p, fan_out, fan_in);
    p += fan_out * fan_in;
    Eigen::Map<const VectorX<Scalar>> b(p, fan_out);
    p += fan_out;
    VectorX<Scalar> z = W * a + b;
    if (layer < hidden_layers_) {
      for (Index i = 0; i < z.size(); ++i) z(i) = tanh(z(i));
    }
    a = std::move(z);
  }
  return a;
}

template <typename Scalar>
VectorX<Scalar> Mlp::input_gradient(const VectorX<Scalar>& input, const Scalar* w) const {
  using std::tanh;
  using MatS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (output_dim_ != 1) throw StructuralError("input_gradient needs a scalar-output network");
  require_dim(input.size(), input_dim_, "mlp input");
  std::vector<VectorX<Scalar>> slopes;
  std::vector<const Scalar*> weights;
  VectorX<Scalar> a = input;
  const Scalar* p = w;
  for (Index layer = 0; layer <= hidden_layers_; ++layer) {
    const Index fan_in = layer_in(layer);
    const Index fan_out = layer_out(layer);
    weights.push_back(p);
    Eigen::Map<const MatS> W(p, fan_out, fan_in);
    Eigen::Map<const VectorX<Scalar>> b(p + fan_out * fan_in, fan_out);
    p += fan_out * fan_in + fan_out;
    if (layer == hidden_layers_) break;
    VectorX<Scalar> z = W * a + b;
    VectorX<Scalar> s(z.size());
    for (Index i = 0; i < z.size(); ++i) {
      z(i) = tanh(z(i));
      s(i) = Scalar(1) - z(i) * z(i);
    }
    slopes.push_back(std::move(s));
    a = std::move(z);
  }
  // Row adjoint, swept from the output stage back to the input.
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> g =
      Eigen::Map<const MatS>(weights[hidden_layers_], 1, hidden_dim_);
  for (Index layer = hidden_layers_ - 1; layer >= 0; --layer) {
    g = g.cwiseProduct(slopes[layer].transpose());
    g = g * Eigen::Map<const MatS>(weights[layer], layer_out(layer), layer_in(layer));
  }
  return g.transpose();
}

}  // namespace phl
