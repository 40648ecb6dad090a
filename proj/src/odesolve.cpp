#include "phlearn/odesolve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace phl {

std::string to_string(Method m) { return m == Method::Midpoint ? "midpoint" : "rk4"; }

Method method_from_string(const std::string& name) {
  if (name == "midpoint") return Method::Midpoint;
  if (name == "rk4") return Method::Rk4;
  throw ConfigError("method", "unknown integration method '" + name + "'");
}

const Tableau& tableau(Method m) {
  static const Tableau midpoint = [] {
    Tableau t;
    t.stages = 2;
    t.a = Matrix::Zero(2, 2);
    t.a(1, 0) = 0.5;
    t.b = Vector(2);
    t.b << 0.0, 1.0;
    t.c = Vector(2);
    t.c << 0.0, 0.5;
    return t;
  }();
  static const Tableau rk4 = [] {
    Tableau t;
    t.stages = 4;
    t.a = Matrix::Zero(4, 4);
    t.a(1, 0) = 0.5;
    t.a(2, 1) = 0.5;
    t.a(3, 2) = 1.0;
    t.b = Vector(4);
    t.b << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
    t.c = Vector(4);
    t.c << 0.0, 0.5, 0.5, 1.0;
    return t;
  }();
  return m == Method::Midpoint ? midpoint : rk4;
}

// ---------------------------------------------------------------------------

InputSignal InputSignal::none(Index dim) {
  InputSignal s;
  s.dim_ = dim;
  return s;
}

InputSignal InputSignal::analytic(Index dim, std::function<Vector(double)> fn) {
  InputSignal s;
  s.kind_ = Kind::Analytic;
  s.dim_ = dim;
  s.fn_ = std::move(fn);
  return s;
}

InputSignal InputSignal::sampled(std::vector<double> times, Matrix values) {
  require_dim(values.rows(), static_cast<Index>(times.size()), "sampled input rows");
  InputSignal s;
  s.kind_ = Kind::Sampled;
  s.dim_ = values.cols();
  s.times_ = std::move(times);
  s.values_ = std::move(values);
  return s;
}

InputSignal InputSignal::feedback(Index dim, std::function<Vector(double, const Vector&)> law) {
  InputSignal s;
  s.kind_ = Kind::Feedback;
  s.dim_ = dim;
  s.law_ = std::move(law);
  return s;
}

Vector InputSignal::at(double t, double t0, const Vector& x0) const {
  switch (kind_) {
    case Kind::None:
      return Vector::Zero(dim_);
    case Kind::Analytic:
      return fn_(t);
    case Kind::Feedback:
      return law_(t0, x0);
    case Kind::Sampled: {
      if (times_.empty()) return Vector::Zero(dim_);
      const double slack = 1e-9 * std::max(1.0, std::abs(t0));
      auto it = std::upper_bound(times_.begin(), times_.end(), t0 + slack);
      const Index k = std::max<Index>(0, static_cast<Index>(it - times_.begin()) - 1);
      return values_.row(k).transpose();
    }
  }
  return Vector::Zero(dim_);
}

// ---------------------------------------------------------------------------

void Trajectory::check() const {
  const Index n = size();
  if (states.rows() != n || inputs.rows() != n || outputs.rows() != n) {
    throw StructuralError("trajectory: times/states/inputs/outputs lengths disagree");
  }
  for (Index k = 1; k < n; ++k) {
    if (!(times[k] > times[k - 1])) throw StructuralError("trajectory: times not increasing");
  }
}

InputSignal Trajectory::input_signal() const {
  if (inputs.cols() == 0) return InputSignal::none();
  return InputSignal::sampled(times, inputs);
}

// ---------------------------------------------------------------------------

namespace {

void check_finite(const Vector& v, double t) {
  if (!v.allFinite()) throw IntegrationError("non-finite state", t);
}

}  // namespace

Vector step(Method method, const RhsFn& f, const Vector& x, double t, double h) {
  if (!(h > 0)) throw ConfigError("h", "step size must be positive");
  const Tableau& tb = tableau(method);
  std::vector<Vector> k(tb.stages);
  Vector next = x;
  for (int i = 0; i < tb.stages; ++i) {
    Vector xi = x;
    for (int j = 0; j < i; ++j) {
      if (tb.a(i, j) != 0.0) xi += h * tb.a(i, j) * k[j];
    }
    k[i] = f(t + tb.c(i) * h, xi);
    check_finite(k[i], t);
    next += h * tb.b(i) * k[i];
  }
  check_finite(next, t + h);
  return next;
}

Index step_count(double t_end, double h) {
  if (!(h > 0)) throw ConfigError("h", "step size must be positive");
  if (!(t_end > 0)) throw ConfigError("t_end", "horizon must be positive");
  const double ratio = t_end / h;
  const double steps = std::round(ratio);
  if (std::abs(ratio - steps) > 1e-6 * std::max(1.0, ratio)) {
    throw ConfigError("h", "step size does not divide the horizon");
  }
  return static_cast<Index>(steps);
}

namespace {

Trajectory allocate(const OdeSystem& sys, const InputSignal& u, Index steps) {
  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.states.resize(steps + 1, sys.state_dim());
  traj.inputs.resize(steps + 1, u.dim());
  traj.outputs.resize(steps + 1, sys.output_dim());
  return traj;
}

void record(const OdeSystem& sys, const InputSignal& u, const Vector& w, Trajectory& traj,
            Index k, double t, const Vector& x) {
  traj.times[k] = t;
  traj.states.row(k) = x.transpose();
  const Vector uk = u.at(t, t, x);
  traj.inputs.row(k) = uk.transpose();
  Vector y;
  sys.channel(Channel::Output, t, x, uk, w, y, nullptr, nullptr);
  traj.outputs.row(k) = y.transpose();
}

}  // namespace

Trajectory integrate(const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end,
                     double h, Method method, const Vector& w) {
  require_dim(x0.size(), sys.state_dim(), "initial state");
  require_dim(u.dim(), sys.input_dim(), "input signal");
  require_dim(w.size(), sys.param_dim(), "parameters");
  const Index steps = step_count(t_end, h);
  Trajectory traj = allocate(sys, u, steps);
  Vector x = x0;
  record(sys, u, w, traj, 0, 0.0, x);
  Vector f;
  for (Index k = 0; k < steps; ++k) {
    const double t0 = static_cast<double>(k) * h;
    const RhsFn rhs = [&](double t, const Vector& xs) {
      sys.rhs(t, xs, u.at(t, t0, x), w, f);
      return f;
    };
    x = step(method, rhs, x, t0, h);
    record(sys, u, w, traj, k + 1, static_cast<double>(k + 1) * h, x);
  }
  return traj;
}

Trajectory integrate(const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end,
                     double h, Method method) {
  return integrate(sys, x0, u, t_end, h, method, sys.parameters().values());
}

std::pair<Trajectory, SensitivityTrace> integrate_with_sensitivity(
    const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end, double h,
    Method method, const Vector& w) {
  require_dim(x0.size(), sys.state_dim(), "initial state");
  require_dim(u.dim(), sys.input_dim(), "input signal");
  require_dim(w.size(), sys.param_dim(), "parameters");
  if (u.kind() == InputSignal::Kind::Feedback) {
    throw ConfigError("input", "sensitivities need an open-loop input signal");
  }
  const Index n = sys.state_dim();
  const Index m = sys.param_dim();
  const Index steps = step_count(t_end, h);
  const Tableau& tb = tableau(method);

  Trajectory traj = allocate(sys, u, steps);
  SensitivityTrace trace;
  trace.s.reserve(steps + 1);
  Vector x = x0;
  Matrix s = Matrix::Zero(n, m);
  record(sys, u, w, traj, 0, 0.0, x);
  trace.s.push_back(s);

  std::vector<Vector> k(tb.stages);
  std::vector<Matrix> ks(tb.stages);
  Matrix fx, fw;
  for (Index step_index = 0; step_index < steps; ++step_index) {
    const double t0 = static_cast<double>(step_index) * h;
    Vector x_next = x;
    Matrix s_next = s;
    for (int i = 0; i < tb.stages; ++i) {
      Vector xi = x;
      Matrix si = s;
      for (int j = 0; j < i; ++j) {
        if (tb.a(i, j) == 0.0) continue;
        xi += h * tb.a(i, j) * k[j];
        si += h * tb.a(i, j) * ks[j];
      }
      const double ti = t0 + tb.c(i) * h;
      sys.rhs_partials(ti, xi, u.at(ti, t0, x), w, k[i], fx, fw);
      check_finite(k[i], t0);
      ks[i].noalias() = fx * si;
      ks[i] += fw;
      x_next += h * tb.b(i) * k[i];
      s_next += h * tb.b(i) * ks[i];
    }
    check_finite(x_next, t0 + h);
    if (!s_next.allFinite()) throw IntegrationError("non-finite sensitivity", t0 + h);
    x = std::move(x_next);
    s = std::move(s_next);
    record(sys, u, w, traj, step_index + 1, static_cast<double>(step_index + 1) * h, x);
    trace.s.push_back(s);
  }
  return {std::move(traj), std::move(trace)};
}

std::optional<double> order_estimate(Method method, const ConvergenceProblem& problem) {
  const double hs[] = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> lx, ly;
  for (double h : hs) {
    const Index steps = step_count(problem.t_end, h);
    Vector x = problem.x0;
    for (Index k = 0; k < steps; ++k) x = step(method, problem.rhs, x, k * h, h);
    const double err = (x - problem.exact(problem.t_end)).norm();
    if (err <= 1e-14) continue;
    lx.push_back(std::log(h));
    ly.push_back(std::log(err));
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  traj.check();
  os << "t";
  for (Index i = 0; i < traj.states.cols(); ++i) os << ",x_" << i + 1;
  for (Index i = 0; i < traj.inputs.cols(); ++i) os << ",u_" << i + 1;
  for (Index i = 0; i < traj.outputs.cols(); ++i) os << ",y_" << i + 1;
  os << '\n' << std::setprecision(17);
  for (Index k = 0; k < traj.size(); ++k) {
    os << traj.times[k];
    for (Index i = 0; i < traj.states.cols(); ++i) os << ',' << traj.states(k, i);
    for (Index i = 0; i < traj.inputs.cols(); ++i) os << ',' << traj.inputs(k, i);
    for (Index i = 0; i < traj.outputs.cols(); ++i) os << ',' << traj.outputs(k, i);
    os << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_trajectory_csv(os, traj);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw StructuralError("trajectory csv: missing header");
  Index nx = 0, nu = 0, ny = 0;
  {
    std::stringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');
    while (std::getline(ss, col, ',')) {
      col.erase(0, col.find_first_not_of(' '));
      if (col.rfind("x_", 0) == 0) ++nx;
      else if (col.rfind("u_", 0) == 0) ++nu;
      else if (col.rfind("y_", 0) == 0) ++ny;
      else throw StructuralError("trajectory csv: unexpected column '" + col + "'");
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Index>(row.size()) != 1 + nx + nu + ny) {
      throw StructuralError("trajectory csv: ragged row");
    }
    rows.push_back(std::move(row));
  }
  Trajectory traj;
  const Index n = static_cast<Index>(rows.size());
  traj.times.resize(n);
  traj.states.resize(n, nx);
  traj.inputs.resize(n, nu);
  traj.outputs.resize(n, ny);
  for (Index k = 0; k < n; ++k) {
    const auto& r = rows[k];
    traj.times[k] = r[0];
    for (Index i = 0; i < nx; ++i) traj.states(k, i) = r[1 + i];
    for (Index i = 0; i < nu; ++i) traj.inputs(k, i) = r[1 + nx + i];
    for (Index i = 0; i < ny; ++i) traj.outputs(k, i) = r[1 + nx + nu + i];
  }
  traj.check();
  return traj;
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_trajectory_csv(is);
}

}  // namespace phl
