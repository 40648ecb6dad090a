#pragma once

#include "phlearn/mlp.hpp"
#include "phlearn/network.hpp"
#include "phlearn/odesolve.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace phl {

struct PendulumParams {
  double M = 0.5;    // cart mass
  double m = 0.2;    // pole mass
  double l = 0.3;    // pole half-length
  double g = 9.81;
  double J = 0.006;  // pole inertia
  double b = 0.1;    // cart friction

  void validate() const;
};

/// Default linear state-feedback gain.
Vector pendulum_gain();

/// Cart-pole vector field, z = (x, v, theta, omega), F = force on the cart.
Vector pendulum_rhs(const Vector& z, double force, const PendulumParams& p = {});

/// F = sigma (K . z).
double pendulum_controller(const Vector& z, const Vector& gain, int sigma);

/// The sign sigma in {+1, -1} whose closed loop (zero-order hold at `period`)
/// brings z0 = (0.2, 0, 0.1, 0) below 0.05 in norm after 6 s; throws when
/// neither or both do.
int stabilizing_sign(const PendulumParams& p = {}, const Vector& gain = pendulum_gain(),
                     double period = 0.05);

/// Cart-pole as an open-loop system with input F; outputs the full state.
class PendulumPlant final : public OdeSystem {
 public:
  explicit PendulumPlant(PendulumParams p = {});
  using OdeSystem::rhs;
  Index state_dim() const override { return 4; }
  Index input_dim() const override { return 1; }
  std::vector<std::string> state_names() const override;
  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override;
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override;

 private:
  PendulumParams p_;
};

struct PendulumDataSpec {
  PendulumParams params;
  Vector gain = pendulum_gain();
  int sigma = 0;           // 0: determined by stabilizing_sign
  double t_end = 6.0;
  double h = 0.05;         // sampling and controller hold period
  int substeps = 10;       // RK4 substeps per sample
};

/// Closed-loop data: the controller output is held between samples and
/// recorded as the input column; outputs equal the full state.
std::vector<Trajectory> generate_pendulum_data(const std::vector<Vector>& ics,
                                               const PendulumDataSpec& spec = {});

/// theta0 in {-0.1, 0.1}, x0 in {-0.2, 0.2}, zero velocities.
std::vector<Vector> pendulum_training_ics();
/// Uniform in x0 [-0.2, 0.2], v0 [-0.1, 0.1], theta0 [-0.2, 0.2], omega0 [-0.1, 0.1].
std::vector<Vector> pendulum_random_ics(int count, std::uint64_t seed);

struct SurrogateInit {
  double M = 1.0;
  double J = 1.0;
  double d1 = 0.5;
  double d2 = 0.5;
};

/// Velocity-coordinate surrogate
///   xdot = v, vdot = (F - d1 v + h1(v, w)) / M,
///   thetadot = w, wdot = (h2(v, w) - d2 w) / J,
/// with (h1, h2) a 2-hidden-2 tanh network and M, J, d1, d2 squared raw
/// parameters. Parameter slices: "transformer", "cart_mass", "pole_inertia",
/// "cart_friction", "pole_friction".
class PendulumSurrogate final : public OdeSystem {
 public:
  explicit PendulumSurrogate(Index hidden = 50, SurrogateInit init = {}, std::uint64_t seed = 0);
  using OdeSystem::rhs;
  Index state_dim() const override { return 4; }
  Index input_dim() const override { return 1; }
  std::vector<std::string> state_names() const override;
  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override;
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override;
  const Mlp& transformer() const { return net_; }

 private:
  Mlp net_;
};

/// The same surrogate as a network: cart and pole junctions (common
/// velocity) joined by a transformer-solution construct, with momentum
/// stores, linear frictions, a force source and zero-energy position stores.
/// State order: cart_mass (M v), cart_position, pole_angle, pole_inertia (J w).
Network build_pendulum_network(Index hidden = 50, SurrogateInit init = {}, std::uint64_t seed = 0);

}  // namespace phl
