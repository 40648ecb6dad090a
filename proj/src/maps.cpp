#include "phlearn/maps.hpp"

namespace phl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Vector raw_of(const Vector& effective) { return effective.array().sqrt().matrix(); }

}  // namespace

Index EnergyMap::param_count() const {
  return std::visit(
      overloaded{[](const QuadraticEnergy& k) -> Index { return k.trainable ? 1 : 0; },
                 [](const PolynomialEnergy& k) -> Index {
                   return k.trainable ? k.coefficients.size() : 0;
                 },
                 [](const NeuralEnergy& k) -> Index { return k.net.param_count(); },
                 [](const PairPotentialEnergy&) -> Index { return 0; }},
      kind);
}

Vector EnergyMap::initial_params(std::mt19937_64& rng) const {
  return std::visit(
      overloaded{[](const QuadraticEnergy& k) -> Vector {
                   return k.trainable ? Vector::Constant(1, positive_raw(k.coefficient)) : Vector();
                 },
                 [](const PolynomialEnergy& k) -> Vector {
                   return k.trainable ? raw_of(k.coefficients) : Vector();
                 },
                 [&](const NeuralEnergy& k) -> Vector { return k.net.initial_params(rng); },
                 [](const PairPotentialEnergy&) -> Vector { return Vector(); }},
      kind);
}

Index ResistiveMap::param_count() const {
  return std::visit(
      overloaded{[](const LinearResistance& k) -> Index { return k.trainable ? 1 : 0; },
                 [](const NeuralResistance& k) -> Index { return k.net.param_count(); },
                 [](const AlignmentResistance&) -> Index { return 0; }},
      kind);
}

Vector ResistiveMap::initial_params(std::mt19937_64& rng) const {
  return std::visit(
      overloaded{[](const LinearResistance& k) -> Vector {
                   return k.trainable ? Vector::Constant(1, positive_raw(k.value)) : Vector();
                 },
                 [&](const NeuralResistance& k) -> Vector { return k.net.initial_params(rng); },
                 [](const AlignmentResistance&) -> Vector { return Vector(); }},
      kind);
}

double eval_energy(const EnergyMap& map, const Vector& x, const Vector& w) {
  require_dim(w.size(), map.param_count(), "energy parameters");
  return energy<double>(map, x, w.data());
}

Vector eval_energy_gradient(const EnergyMap& map, const Vector& x, const Vector& w) {
  require_dim(w.size(), map.param_count(), "energy parameters");
  return energy_gradient<double>(map, x, w.data());
}

Vector eval_resistive(const ResistiveMap& map, const Vector& e, const Vector& w,
                      const Vector* modulator) {
  require_dim(w.size(), map.param_count(), "resistive parameters");
  return resistive<double>(map, e, w.data(), modulator);
}

double instantaneous_power(const Vector& e, const Vector& f) {
  require_dim(f.size(), e.size(), "power flow");
  return e.dot(f);
}

}  // namespace phl
