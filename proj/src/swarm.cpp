#include "phlearn/swarm.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace phl {

void CsParams::validate() const {
  if (!(gamma > 0 && c_a > 0 && l_a > 0 && c_r > 0 && l_r > 0)) {
    throw ConfigError("cs", "all interaction parameters must be positive");
  }
}

double cs_interaction(double r, const CsParams& p) { return std::pow(1.0 + r * r, -p.gamma); }

double cs_potential(double r, const CsParams& p) {
  return -p.c_a * std::exp(-r / p.l_a) + p.c_r * std::exp(-r / p.l_r);
}

double cs_potential_grad(double r, const CsParams& p) {
  return (p.c_a / p.l_a) * std::exp(-r / p.l_a) - (p.c_r / p.l_r) * std::exp(-r / p.l_r);
}

double cs_equilibrium_spacing(const CsParams& p) {
  double lo = 0.0, hi = 1.0;
  if (cs_potential_grad(lo, p) >= 0) throw std::runtime_error("potential is not repulsive at 0");
  while (cs_potential_grad(hi, p) < 0) {
    hi *= 2;
    if (hi > 1e6) throw std::runtime_error("potential has no equilibrium spacing");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cs_potential_grad(mid, p) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Vector cs_rhs(const Vector& state, const SwarmLayout& L, const CsParams& p, bool alignment) {
  require_dim(state.size(), L.state_dim(), "swarm state");
  if (L.n < 2) throw ConfigError("particles", "need at least two particles");
  const Index nd = L.n * L.d;
  Vector out(state.size());
  out.head(nd) = state.tail(nd);
  out.tail(nd).setZero();
  const double inv_n = 1.0 / static_cast<double>(L.n);
  for (Index i = 0; i < L.n; ++i) {
    auto xi = state.segment(i * L.d, L.d);
    auto vi = state.segment(nd + i * L.d, L.d);
    auto acc = out.segment(nd + i * L.d, L.d);
    for (Index j = 0; j < L.n; ++j) {
      if (j == i) continue;
      const Vector delta = xi - state.segment(j * L.d, L.d);
      const double r = delta.norm();
      if (alignment) acc += inv_n * cs_interaction(r, p) * (state.segment(nd + j * L.d, L.d) - vi);
      if (r > 0) acc -= inv_n * cs_potential_grad(r, p) * delta / r;
    }
  }
  return out;
}

CsSystem::CsSystem(SwarmLayout layout, CsParams p, bool alignment)
    : layout_(layout), p_(p), alignment_(alignment) {
  p_.validate();
}

namespace {

std::vector<std::string> swarm_names(const SwarmLayout& L) {
  std::vector<std::string> names;
  for (const char* kind : {"x", "v"}) {
    for (Index i = 0; i < L.n; ++i) {
      for (Index k = 0; k < L.d; ++k) {
        names.push_back(std::string(kind) + std::to_string(i + 1) +
                        (L.d > 1 ? "_" + std::to_string(k + 1) : ""));
      }
    }
  }
  return names;
}

}  // namespace

std::vector<std::string> CsSystem::state_names() const { return swarm_names(layout_); }

void CsSystem::rhs(double, const Vector& x, const Vector&, const Vector&, Vector& f) const {
  f = cs_rhs(x, layout_, p_, alignment_);
}

void CsSystem::rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                            Matrix& dfdx, Matrix& dfdw) const {
  rhs(t, x, u, w, f);
  // Ground truth only; partials are not needed for training.
  const Index n = state_dim();
  dfdx.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(x(j)));
    Vector p = x, m = x;
    p(j) += step;
    m(j) -= step;
    dfdx.col(j) = (cs_rhs(p, layout_, p_, alignment_) - cs_rhs(m, layout_, p_, alignment_)) / (2 * step);
  }
  dfdw.resize(n, 0);
}

std::vector<Vector> swarm_random_ics(const SwarmDataSpec& spec, int count, std::uint64_t seed) {
  if (!(spec.ic_high > spec.ic_low)) throw ConfigError("ic_range", "empty interval");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(spec.ic_low, spec.ic_high);
  std::vector<Vector> ics;
  for (int i = 0; i < count; ++i) {
    ics.push_back(Vector::NullaryExpr(spec.layout.state_dim(), [&] { return d(rng); }));
  }
  return ics;
}

std::vector<Trajectory> generate_swarm_data(const SwarmDataSpec& spec,
                                            const std::vector<Vector>& ics) {
  if (spec.layout.n < 2) throw ConfigError("particles", "need at least two particles");
  if (spec.substeps < 1) throw ConfigError("substeps", "must be at least 1");
  spec.params.validate();
  const Index steps = step_count(spec.t_end, spec.h);
  const double dt = spec.h / spec.substeps;
  const RhsFn f = [&](double, const Vector& x) { return cs_rhs(x, spec.layout, spec.params); };
  std::vector<Trajectory> out;
  for (const auto& x0 : ics) {
    require_dim(x0.size(), spec.layout.state_dim(), "swarm initial condition");
    Trajectory traj;
    traj.times.resize(steps + 1);
    traj.states.resize(steps + 1, x0.size());
    traj.inputs.resize(steps + 1, 0);
    Vector x = x0;
    for (Index k = 0; k <= steps; ++k) {
      traj.times[k] = static_cast<double>(k) * spec.h;
      traj.states.row(k) = x.transpose();
      if (k == steps) break;
      for (int s = 0; s < spec.substeps; ++s) x = step(Method::Rk4, f, x, k * spec.h + s * dt, dt);
    }
    traj.outputs = traj.states;
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> generate_swarm_data(const SwarmDataSpec& spec, std::uint64_t seed) {
  return generate_swarm_data(spec, swarm_random_ics(spec, spec.n_series, seed));
}

// ---------------------------------------------------------------------------

SwarmModel::SwarmModel(SwarmLayout layout, Index hidden, std::uint64_t seed)
    : layout_(layout), net_(2 * layout.d, hidden, layout.d) {
  if (layout.n < 1) throw ConfigError("particles", "need at least one particle");
  std::mt19937_64 rng(seed);
  params_.append("interaction", net_.initial_params(rng));
}

std::vector<std::string> SwarmModel::state_names() const { return swarm_names(layout_); }

Vector SwarmModel::force(const Vector& dp, const Vector& dq, const Vector& w) const {
  Vector in(2 * layout_.d);
  in << dp, dq;
  return net_.forward<double>(in, w.data());
}

void SwarmModel::rhs(double, const Vector& x, const Vector&, const Vector& w, Vector& f) const {
  require_dim(x.size(), state_dim(), "swarm state");
  require_dim(w.size(), param_dim(), "swarm parameters");
  const Index d = layout_.d, n = layout_.n, nd = n * d;
  const double inv_n = 1.0 / static_cast<double>(n);
  f.resize(x.size());
  f.head(nd) = x.tail(nd);
  f.tail(nd).setZero();
  Vector in(2 * d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      in.head(d) = x.segment(nd + j * d, d) - x.segment(nd + i * d, d);
      in.tail(d) = x.segment(j * d, d) - x.segment(i * d, d);
      f.segment(nd + i * d, d) += inv_n * net_.forward<double>(in, w.data());
    }
  }
}

void SwarmModel::rhs_partials(double, const Vector& x, const Vector&, const Vector& w, Vector& f,
                              Matrix& dfdx, Matrix& dfdw) const {
  require_dim(x.size(), state_dim(), "swarm state");
  require_dim(w.size(), param_dim(), "swarm parameters");
  const Index d = layout_.d, n = layout_.n, nd = n * d;
  const double inv_n = 1.0 / static_cast<double>(n);
  f.resize(x.size());
  f.head(nd) = x.tail(nd);
  f.tail(nd).setZero();
  dfdx.setZero(x.size(), x.size());
  dfdx.topRightCorner(nd, nd).setIdentity();
  dfdw.setZero(x.size(), param_dim());
  Vector in(2 * d);
  for (Index i = 0; i < n; ++i) {
    const Index row = nd + i * d;
    for (Index j = 0; j < n; ++j) {
      in.head(d) = x.segment(nd + j * d, d) - x.segment(nd + i * d, d);
      in.tail(d) = x.segment(j * d, d) - x.segment(i * d, d);
      const auto ev = net_.eval_with_jacobians(in, w.data());
      f.segment(row, d) += inv_n * ev.output;
      dfdw.middleRows(row, d) += inv_n * ev.d_params;
      if (j == i) continue;
      const Matrix jp = inv_n * ev.d_input.leftCols(d);
      const Matrix jq = inv_n * ev.d_input.rightCols(d);
      dfdx.block(row, nd + j * d, d, d) += jp;
      dfdx.block(row, nd + i * d, d, d) -= jp;
      dfdx.block(row, j * d, d, d) += jq;
      dfdx.block(row, i * d, d, d) -= jq;
    }
  }
}

// ---------------------------------------------------------------------------

Network build_msd_equivalent_cs(Index n, const CsParams& p) {
  if (n < 2) throw ConfigError("particles", "need at least two particles");
  p.validate();
  const int width = static_cast<int>(std::to_string(n).size());
  auto tag = [width](Index i) {
    std::ostringstream os;
    os << std::setw(width) << std::setfill('0') << i + 1;
    return os.str();
  };
  const double inv_n = 1.0 / static_cast<double>(n);
  Network net;
  for (Index i = 0; i < n; ++i) {
    net.constructs.push_back(
        {"m" + tag(i), FlowStore{EnergyMap{QuadraticEnergy{1.0, false}}}});
    net.junctions.push_back({"J" + tag(i), JunctionKind::CommonEffort, {{"m" + tag(i), 0, 1}}});
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const std::string ij = tag(i) + tag(j);
      const std::string spring = "s" + ij, damper = "d" + ij;
      const std::string link = "L" + ij, rel = "R" + ij;
      net.constructs.push_back(
          {spring, EffortStore{EnergyMap{PairPotentialEnergy{p.c_a, p.l_a, p.c_r, p.l_r, inv_n}}}});
      net.constructs.push_back(
          {damper, Resistive{ResistiveMap{AlignmentResistance{p.gamma, inv_n, spring}}}});
      // Relative velocity v_i - v_j across the link; the link force leaves
      // particle i and enters particle j.
      net.junctions[i].ports.push_back({link, 0, 1});
      net.junctions[j].ports.push_back({link, 0, -1});
      net.junctions.push_back({link, JunctionKind::CommonFlow,
                               {{"J" + tag(i), 0, -1}, {"J" + tag(j), 0, 1}, {rel, 0, 1}}});
      net.junctions.push_back(
          {rel, JunctionKind::CommonEffort, {{link, 0, -1}, {spring, 0, 1}, {damper, 0, 1}}});
    }
  }
  for (Index i = 0; i < n; ++i) net.observed.push_back({Observed::Kind::Effort, "m" + tag(i)});
  net.init_params();
  return net;
}

PotentialCurve recover_potential_curve(const SwarmModel& model, const Vector& w, const CsParams& p,
                                       double q_min, double q_max, double dq) {
  if (model.layout().d != 1) throw ConfigError("dimension", "potential curves need a 1D model");
  if (!(dq > 0) || !(q_max > q_min)) throw ConfigError("grid", "invalid potential grid");
  const Index count = static_cast<Index>(std::llround((q_max - q_min) / dq)) + 1;
  PotentialCurve c;
  const Vector zero = Vector::Zero(1);
  for (Index k = 0; k < count; ++k) {
    const double q = q_min + static_cast<double>(k) * dq;
    c.q.push_back(q);
    c.learned.push_back(model.force(zero, Vector::Constant(1, q), w)(0));
    const double sign = q > 0 ? 1.0 : (q < 0 ? -1.0 : 0.0);
    c.reference.push_back(cs_potential_grad(std::abs(q), p) * sign);
  }
  return c;
}

}  // namespace phl
