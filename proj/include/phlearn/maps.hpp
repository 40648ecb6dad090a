#pragma once

#include "phlearn/core.hpp"
#include "phlearn/mlp.hpp"
#include "phlearn/params.hpp"

#include <cmath>
#include <string>
#include <variant>

namespace phl {

// ---------------------------------------------------------------------------
// Constitutive maps. Trainable coefficients that must stay nonnegative are
// stored raw and squared on use; `value`/`coefficients` hold the effective
// numbers, used as the initial guess when trainable and as constants when not.
// ---------------------------------------------------------------------------

/// H(x) = c/2 |x|^2
struct QuadraticEnergy {
  double coefficient = 1.0;
  bool trainable = true;
};

/// H(x) = sum_i a_i sum_k x_k^(2i), a_i >= 0
struct PolynomialEnergy {
  Vector coefficients = Vector::Constant(3, 0.1);
  bool trainable = true;
};

/// H(x) = mlp(x), scalar output.
struct NeuralEnergy {
  Mlp net;
};

/// H(x) = scale * U(|x|) with U(r) = -C_A exp(-r/l_A) + C_R exp(-r/l_R).
/// Fixed map; the gradient at x = 0 is taken as 0.
struct PairPotentialEnergy {
  double c_a = 200.0;
  double l_a = 100.0;
  double c_r = 500.0;
  double l_r = 2.0;
  double scale = 1.0;
};

struct EnergyMap {
  std::variant<QuadraticEnergy, PolynomialEnergy, NeuralEnergy, PairPotentialEnergy> kind;
  Index dim = 1;

  Index param_count() const;
  Vector initial_params(std::mt19937_64& rng) const;
};

/// out = d * in, d >= 0
struct LinearResistance {
  double value = 1.0;
  bool trainable = true;
};

/// out = mlp(in)
struct NeuralResistance {
  Mlp net;
};

/// out = scale * G(|m|) * in with G(r) = (1 + r^2)^-gamma, where m is the
/// state of the construct named by `modulator`. Fixed map.
struct AlignmentResistance {
  double gamma = 0.15;
  double scale = 1.0;
  std::string modulator;
};

struct ResistiveMap {
  std::variant<LinearResistance, NeuralResistance, AlignmentResistance> kind;
  Index dim = 1;

  Index param_count() const;
  Vector initial_params(std::mt19937_64& rng) const;
};

/// Scalar modulus of a linear transformer or gyrator. Unconstrained sign.
struct ModulusMap {
  double value = 1.0;
  bool trainable = false;

  Index param_count() const { return trainable ? 1 : 0; }
};

// ---------------------------------------------------------------------------
// Generic evaluation. `w` points at the construct's parameter slice (ignored by
// fixed maps). Scalar may be double or an automatic-differentiation type.
// ---------------------------------------------------------------------------

inline double pair_potential(const PairPotentialEnergy& p, double r) {
  return -p.c_a * std::exp(-r / p.l_a) + p.c_r * std::exp(-r / p.l_r);
}

template <typename Scalar>
Scalar pair_potential_derivative(const PairPotentialEnergy& p, const Scalar& r) {
  using std::exp;
  return (p.c_a / p.l_a) * exp(-r / p.l_a) - (p.c_r / p.l_r) * exp(-r / p.l_r);
}

template <typename Scalar>
Scalar energy(const EnergyMap& map, const VectorX<Scalar>& x, const Scalar* w) {
  using std::abs;
  using std::exp;
  require_dim(x.size(), map.dim, "energy state");
  return std::visit(
      [&](const auto& k) -> Scalar {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, QuadraticEnergy>) {
          const Scalar c = k.trainable ? positive(w[0]) : Scalar(k.coefficient);
          return Scalar(0.5) * c * x.squaredNorm();
        } else if constexpr (std::is_same_v<K, PolynomialEnergy>) {
          Scalar h(0);
          for (Index k2 = 0; k2 < x.size(); ++k2) {
            const Scalar x2 = x(k2) * x(k2);
            Scalar power = x2;
            for (Index i = 0; i < k.coefficients.size(); ++i) {
              const Scalar a = k.trainable ? positive(w[i]) : Scalar(k.coefficients(i));
              h += a * power;
              power *= x2;
            }
          }
          return h;
        } else if constexpr (std::is_same_v<K, NeuralEnergy>) {
          return k.net.forward(x, w)(0);
        } else {
          Scalar r = abs(x(0));
          return Scalar(k.scale) * (Scalar(-k.c_a) * exp(-r / k.l_a) + Scalar(k.c_r) * exp(-r / k.l_r));
        }
      },
      map.kind);
}

template <typename Scalar>
VectorX<Scalar> energy_gradient(const EnergyMap& map, const VectorX<Scalar>& x, const Scalar* w) {
  require_dim(x.size(), map.dim, "energy state");
  return std::visit(
      [&](const auto& k) -> VectorX<Scalar> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, QuadraticEnergy>) {
          const Scalar c = k.trainable ? positive(w[0]) : Scalar(k.coefficient);
          return c * x;
        } else if constexpr (std::is_same_v<K, PolynomialEnergy>) {
          VectorX<Scalar> g(x.size());
          for (Index k2 = 0; k2 < x.size(); ++k2) {
            const Scalar x2 = x(k2) * x(k2);
            Scalar power = x(k2);  // x^(2i-1)
            Scalar acc(0);
            for (Index i = 0; i < k.coefficients.size(); ++i) {
              const Scalar a = k.trainable ? positive(w[i]) : Scalar(k.coefficients(i));
              acc += Scalar(2.0 * static_cast<double>(i + 1)) * a * power;
              power *= x2;
            }
            g(k2) = acc;
          }
          return g;
        } else if constexpr (std::is_same_v<K, NeuralEnergy>) {
          return k.net.input_gradient(x, w);
        } else {
          VectorX<Scalar> g(1);
          const double sx = x(0) > Scalar(0) ? 1.0 : (x(0) < Scalar(0) ? -1.0 : 0.0);
          const Scalar r = Scalar(sx) * x(0);
          g(0) = Scalar(k.scale * sx) * pair_potential_derivative(k, r);
          return g;
        }
      },
      map.kind);
}

/// `modulator` is the state of the modulating construct (alignment maps only).
template <typename Scalar>
VectorX<Scalar> resistive(const ResistiveMap& map, const VectorX<Scalar>& in, const Scalar* w,
                          const VectorX<Scalar>* modulator = nullptr) {
  using std::pow;
  require_dim(in.size(), map.dim, "resistive input");
  return std::visit(
      [&](const auto& k) -> VectorX<Scalar> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinearResistance>) {
          const Scalar d = k.trainable ? positive(w[0]) : Scalar(k.value);
          return d * in;
        } else if constexpr (std::is_same_v<K, NeuralResistance>) {
          return k.net.forward(in, w);
        } else {
          if (modulator == nullptr) throw StructuralError("alignment map needs a modulating state");
          const Scalar r2 = modulator->squaredNorm();
          const Scalar g = pow(Scalar(1) + r2, -k.gamma);
          return Scalar(k.scale) * g * in;
        }
      },
      map.kind);
}

// ---------------------------------------------------------------------------
// Double-precision entry points taking a parameter slice.
// ---------------------------------------------------------------------------

double eval_energy(const EnergyMap& map, const Vector& x, const Vector& w);
Vector eval_energy_gradient(const EnergyMap& map, const Vector& x, const Vector& w);
Vector eval_resistive(const ResistiveMap& map, const Vector& e, const Vector& w,
                      const Vector* modulator = nullptr);

/// e^T f
double instantaneous_power(const Vector& e, const Vector& f);

}  // namespace phl
