#include "phlearn/pendulum.hpp"

#include <cmath>
#include <random>

namespace phl {

void PendulumParams::validate() const {
  if (!(M > 0 && m > 0 && l > 0 && g > 0 && J > 0 && b > 0)) {
    throw ConfigError("pendulum", "all physical parameters must be positive");
  }
  // (m l cos)^2 - (m + M)(J + m l^2) is largest at cos = 1.
  if (!(std::pow(m * l, 2) - (m + M) * (J + m * l * l) < 0)) {
    throw ConfigError("pendulum", "singular mass matrix");
  }
}

Vector pendulum_gain() {
  Vector k(4);
  k << 1.2501, 2.7612, -16.3099, -3.7814;
  return k;
}

Vector pendulum_rhs(const Vector& z, double force, const PendulumParams& p) {
  require_dim(z.size(), 4, "pendulum state");
  const double v = z(1), th = z(2), om = z(3);
  const double s = std::sin(th), c = std::cos(th);
  const double ml = p.m * p.l;
  const double inertia = p.J + p.m * p.l * p.l;
  const double den = ml * c * ml * c - (p.m + p.M) * inertia;
  if (!(std::abs(den) > 1e-12)) throw IntegrationError("singular pendulum mass matrix", 0.0);
  Vector dz(4);
  dz(0) = v;
  dz(1) = (inertia * (p.b * v - force - ml * om * om * s) - ml * ml * p.g * s * c) / den;
  dz(2) = om;
  dz(3) = ml * (force * c + ml * om * om * s * c - p.b * v * c + (p.m + p.M) * p.g * s) / den;
  return dz;
}

double pendulum_controller(const Vector& z, const Vector& gain, int sigma) {
  return sigma * gain.dot(z);
}

namespace {

Vector closed_loop_run(const Vector& z0, const PendulumDataSpec& spec, int sigma,
                       Trajectory* traj) {
  const Index steps = step_count(spec.t_end, spec.h);
  const double dt = spec.h / spec.substeps;
  if (traj) {
    traj->times.resize(steps + 1);
    traj->states.resize(steps + 1, 4);
    traj->inputs.resize(steps + 1, 1);
  }
  Vector z = z0;
  for (Index k = 0; k <= steps; ++k) {
    const double force = pendulum_controller(z, spec.gain, sigma);
    if (traj) {
      traj->times[k] = static_cast<double>(k) * spec.h;
      traj->states.row(k) = z.transpose();
      traj->inputs(k, 0) = force;
    }
    if (k == steps) break;
    const RhsFn f = [&](double, const Vector& x) { return pendulum_rhs(x, force, spec.params); };
    for (int s = 0; s < spec.substeps; ++s) {
      z = step(Method::Rk4, f, z, k * spec.h + s * dt, dt);
    }
  }
  if (traj) traj->outputs = traj->states;
  return z;
}

}  // namespace

int stabilizing_sign(const PendulumParams& p, const Vector& gain, double period) {
  PendulumDataSpec spec;
  spec.params = p;
  spec.gain = gain;
  spec.h = period;
  Vector z0(4);
  z0 << 0.2, 0.0, 0.1, 0.0;
  int found = 0;
  for (int sigma : {1, -1}) {
    double final_norm = INFINITY;
    try {
      final_norm = closed_loop_run(z0, spec, sigma, nullptr).norm();
    } catch (const IntegrationError&) {
    }
    if (final_norm <= 0.05) {
      if (found != 0) throw std::runtime_error("both controller signs stabilize");
      found = sigma;
    }
  }
  if (found == 0) throw std::runtime_error("no controller sign stabilizes the pendulum");
  return found;
}

std::vector<Trajectory> generate_pendulum_data(const std::vector<Vector>& ics,
                                               const PendulumDataSpec& spec) {
  spec.params.validate();
  if (spec.substeps < 1) throw ConfigError("substeps", "must be at least 1");
  const int sigma = spec.sigma != 0 ? spec.sigma : stabilizing_sign(spec.params, spec.gain, spec.h);
  std::vector<Trajectory> out;
  for (const auto& z0 : ics) {
    require_dim(z0.size(), 4, "pendulum initial condition");
    Trajectory traj;
    closed_loop_run(z0, spec, sigma, &traj);
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Vector> pendulum_training_ics() {
  std::vector<Vector> ics;
  for (double th : {-0.1, 0.1}) {
    for (double x : {-0.2, 0.2}) {
      Vector z(4);
      z << x, 0.0, th, 0.0;
      ics.push_back(z);
    }
  }
  return ics;
}

std::vector<Vector> pendulum_random_ics(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-0.2, 0.2), vel(-0.1, 0.1);
  std::vector<Vector> ics;
  for (int i = 0; i < count; ++i) {
    Vector z(4);
    z(0) = pos(rng);
    z(1) = vel(rng);
    z(2) = pos(rng);
    z(3) = vel(rng);
    ics.push_back(z);
  }
  return ics;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> pendulum_state_names() { return {"x", "v", "theta", "omega"}; }

}  // namespace

PendulumPlant::PendulumPlant(PendulumParams p) : p_(p) { p_.validate(); }

std::vector<std::string> PendulumPlant::state_names() const { return pendulum_state_names(); }

void PendulumPlant::rhs(double, const Vector& x, const Vector& u, const Vector&, Vector& f) const {
  f = pendulum_rhs(x, u(0), p_);
}

void PendulumPlant::rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w,
                                 Vector& f, Matrix& dfdx, Matrix& dfdw) const {
  rhs(t, x, u, w, f);
  // Not used for training; central differences are adequate here.
  dfdx.resize(4, 4);
  for (Index j = 0; j < 4; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(x(j)));
    Vector p = x, m = x;
    p(j) += step;
    m(j) -= step;
    dfdx.col(j) = (pendulum_rhs(p, u(0), p_) - pendulum_rhs(m, u(0), p_)) / (2 * step);
  }
  dfdw.resize(4, 0);
}

// ---------------------------------------------------------------------------

PendulumSurrogate::PendulumSurrogate(Index hidden, SurrogateInit init, std::uint64_t seed)
    : net_(2, hidden, 2) {
  std::mt19937_64 rng(seed);
  params_.append("transformer", net_.initial_params(rng));
  params_.append("cart_mass", Vector::Constant(1, positive_raw(init.M)));
  params_.append("pole_inertia", Vector::Constant(1, positive_raw(init.J)));
  params_.append("cart_friction", Vector::Constant(1, positive_raw(init.d1)));
  params_.append("pole_friction", Vector::Constant(1, positive_raw(init.d2)));
}

std::vector<std::string> PendulumSurrogate::state_names() const { return pendulum_state_names(); }

void PendulumSurrogate::rhs(double, const Vector& x, const Vector& u, const Vector& w,
                            Vector& f) const {
  require_dim(w.size(), param_dim(), "surrogate parameters");
  const Index nh = net_.param_count();
  Vector vw(2);
  vw << x(1), x(3);
  const Vector h = net_.forward<double>(vw, w.data());
  const double M = positive(w(nh)), J = positive(w(nh + 1));
  const double d1 = positive(w(nh + 2)), d2 = positive(w(nh + 3));
  f.resize(4);
  f(0) = x(1);
  f(1) = (u(0) - d1 * x(1) + h(0)) / M;
  f(2) = x(3);
  f(3) = (h(1) - d2 * x(3)) / J;
}

void PendulumSurrogate::rhs_partials(double, const Vector& x, const Vector& u, const Vector& w,
                                     Vector& f, Matrix& dfdx, Matrix& dfdw) const {
  require_dim(w.size(), param_dim(), "surrogate parameters");
  const Index nh = net_.param_count();
  Vector vw(2);
  vw << x(1), x(3);
  const auto ev = net_.eval_with_jacobians(vw, w.data());
  const double rM = w(nh), rJ = w(nh + 1), rd1 = w(nh + 2), rd2 = w(nh + 3);
  const double M = rM * rM, J = rJ * rJ, d1 = rd1 * rd1, d2 = rd2 * rd2;
  const double num_v = u(0) - d1 * x(1) + ev.output(0);
  const double num_w = ev.output(1) - d2 * x(3);
  f.resize(4);
  f << x(1), num_v / M, x(3), num_w / J;

  dfdx.setZero(4, 4);
  dfdx(0, 1) = 1.0;
  dfdx(2, 3) = 1.0;
  dfdx(1, 1) = (ev.d_input(0, 0) - d1) / M;
  dfdx(1, 3) = ev.d_input(0, 1) / M;
  dfdx(3, 1) = ev.d_input(1, 0) / J;
  dfdx(3, 3) = (ev.d_input(1, 1) - d2) / J;

  dfdw.setZero(4, param_dim());
  dfdw.block(1, 0, 1, nh) = ev.d_params.row(0) / M;
  dfdw.block(3, 0, 1, nh) = ev.d_params.row(1) / J;
  dfdw(1, nh) = -2.0 * num_v / (M * rM);
  dfdw(3, nh + 1) = -2.0 * num_w / (J * rJ);
  dfdw(1, nh + 2) = -2.0 * rd1 * x(1) / M;
  dfdw(3, nh + 3) = -2.0 * rd2 * x(3) / J;
}

Network build_pendulum_network(Index hidden, SurrogateInit init, std::uint64_t seed) {
  auto store = [](double c, bool trainable) { return EnergyMap{QuadraticEnergy{c, trainable}}; };
  Network net;
  net.constructs = {
      {"cart_mass", FlowStore{store(1.0 / init.M, true)}},
      {"cart_friction", Resistive{ResistiveMap{LinearResistance{init.d1, true}}}},
      {"cart_position", EffortStore{store(0.0, false)}},
      {"force", FlowSource{Signal::input()}},
      {"pole_inertia", FlowStore{store(1.0 / init.J, true)}},
      {"pole_friction", Resistive{ResistiveMap{LinearResistance{init.d2, true}}}},
      {"pole_angle", EffortStore{store(0.0, false)}},
      {"transformer", TransformerSolution{Mlp(2, hidden, 2)}},
  };
  net.junctions = {
      {"cart", JunctionKind::CommonEffort,
       {{"cart_mass", 0, 1},
        {"cart_friction", 0, 1},
        {"cart_position", 0, 1},
        {"force", 0, -1},
        {"transformer", 0, -1}}},
      {"pole", JunctionKind::CommonEffort,
       {{"pole_inertia", 0, 1},
        {"pole_friction", 0, 1},
        {"pole_angle", 0, 1},
        {"transformer", 1, -1}}},
  };
  net.observed = {{Observed::Kind::State, "cart_position"},
                  {Observed::Kind::Effort, "cart_mass"},
                  {Observed::Kind::State, "pole_angle"},
                  {Observed::Kind::Effort, "pole_inertia"}};
  net.init_params(seed);
  return net;
}

}  // namespace phl
