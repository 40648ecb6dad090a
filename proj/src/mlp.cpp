#include "phlearn/mlp.hpp"

#include <vector>

namespace phl {

Mlp::Mlp(Index input_dim, Index hidden_dim, Index output_dim, Index hidden_layers)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      output_dim_(output_dim),
      hidden_layers_(hidden_layers) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1 || hidden_layers < 1) {
    throw StructuralError("mlp dimensions must be positive");
  }
}

Index Mlp::param_count() const {
  Index count = 0;
  for (Index layer = 0; layer <= hidden_layers_; ++layer) {
    count += layer_out(layer) * layer_in(layer) + layer_out(layer);
  }
  return count;
}

Mlp::Evaluation Mlp::eval_with_jacobians(const Vector& input, const double* w) const {
  require_dim(input.size(), input_dim_, "mlp input");
  const Index n_stages = hidden_layers_ + 1;

  // Forward pass, keeping activations and tanh slopes.
  std::vector<Vector> act(n_stages + 1);
  std::vector<Vector> slope(n_stages);
  std::vector<Index> offset(n_stages);
  act[0] = input;
  const double* p = w;
  for (Index layer = 0; layer < n_stages; ++layer) {
    const Index fan_in = layer_in(layer);
    const Index fan_out = layer_out(layer);
    offset[layer] = p - w;
    Eigen::Map<const Matrix> W(p, fan_out, fan_in);
    Eigen::Map<const Vector> b(p + fan_out * fan_in, fan_out);
    p += fan_out * fan_in + fan_out;
    Vector z = W * act[layer] + b;
    if (layer < hidden_layers_) {
      Vector a = z.array().tanh().matrix();
      slope[layer] = (1.0 - a.array().square()).matrix();
      act[layer + 1] = std::move(a);
    } else {
      act[layer + 1] = std::move(z);
    }
  }

  Evaluation ev;
  ev.output = act[n_stages];
  ev.d_params.setZero(output_dim_, param_count());

  // Reverse sweep with one adjoint row per output: G = d out / d z_layer.
  Matrix G = Matrix::Identity(output_dim_, output_dim_);
  for (Index layer = n_stages - 1; layer >= 0; --layer) {
    const Index fan_in = layer_in(layer);
    const Index fan_out = layer_out(layer);
    const Vector& a_in = act[layer];
    const Index off = offset[layer];
    for (Index c = 0; c < fan_in; ++c) {
      ev.d_params.middleCols(off + c * fan_out, fan_out) = G * a_in(c);
    }
    ev.d_params.middleCols(off + fan_out * fan_in, fan_out) = G;
    Eigen::Map<const Matrix> W(w + off, fan_out, fan_in);
    Matrix G_in = G * W;  // d out / d a_{layer}
    if (layer > 0) {
      G = G_in * slope[layer - 1].asDiagonal();
    } else {
      ev.d_input = std::move(G_in);
    }
  }
  return ev;
}

Vector Mlp::initial_params(std::mt19937_64& rng) const {
  Vector w(param_count());
  Index k = 0;
  for (Index layer = 0; layer <= hidden_layers_; ++layer) {
    const double s = 1.0 / std::sqrt(static_cast<double>(layer_in(layer)));
    std::uniform_real_distribution<double> dist(-s, s);
    const Index n = layer_out(layer) * layer_in(layer) + layer_out(layer);
    for (Index i = 0; i < n; ++i) w(k++) = dist(rng);
  }
  return w;
}

}  // namespace phl
