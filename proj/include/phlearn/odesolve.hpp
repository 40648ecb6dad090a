#pragma once

#include "phlearn/ode_system.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace phl {

enum class Method { Midpoint, Rk4 };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

/// Explicit Runge-Kutta coefficients.
struct Tableau {
  int stages = 0;
  Matrix a;  // strictly lower triangular
  Vector b;
  Vector c;
};
const Tableau& tableau(Method m);
inline int rhs_evals_per_step(Method m) { return tableau(m).stages; }

/// Input u(t). Analytic signals are sampled exactly at every stage time;
/// sampled signals are held from the most recent sample at or before the
/// step start; feedback signals are evaluated once per step from the state
/// at the step start.
class InputSignal {
 public:
  enum class Kind { None, Analytic, Sampled, Feedback };

  InputSignal() = default;
  static InputSignal none(Index dim = 0);
  static InputSignal analytic(Index dim, std::function<Vector(double)> fn);
  static InputSignal sampled(std::vector<double> times, Matrix values);
  static InputSignal feedback(Index dim, std::function<Vector(double, const Vector&)> law);

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }
  /// Value at a stage time t within the step that starts at (t0, x0).
  Vector at(double t, double t0, const Vector& x0) const;

 private:
  Kind kind_ = Kind::None;
  Index dim_ = 0;
  std::function<Vector(double)> fn_;
  std::function<Vector(double, const Vector&)> law_;
  std::vector<double> times_;
  Matrix values_;
};

/// Samples on a uniform grid; row k of each matrix belongs to times[k].
struct Trajectory {
  std::vector<double> times;
  Matrix states;
  Matrix inputs;
  Matrix outputs;

  Index size() const { return static_cast<Index>(times.size()); }
  void check() const;

  /// Piecewise-constant input signal reproducing `inputs`.
  InputSignal input_signal() const;
};

/// dx_k/dw along a trajectory; one n x m matrix per time node.
struct SensitivityTrace {
  std::vector<Matrix> s;
};

using RhsFn = std::function<Vector(double, const Vector&)>;

/// One step of the chosen method; throws IntegrationError on non-finite output.
Vector step(Method method, const RhsFn& f, const Vector& x, double t, double h);

/// Fixed-step integration from t = 0 to t_end, recording every step.
Trajectory integrate(const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end,
                     double h, Method method, const Vector& w);
Trajectory integrate(const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end,
                     double h, Method method);

/// Integration of the state together with S = dx/dw, using the same method
/// on the augmented system with stage-wise sensitivities. S(0) = 0.
std::pair<Trajectory, SensitivityTrace> integrate_with_sensitivity(
    const OdeSystem& sys, const Vector& x0, const InputSignal& u, double t_end, double h,
    Method method, const Vector& w);

/// Number of steps for t_end / h; throws ConfigError when h does not divide t_end.
Index step_count(double t_end, double h);

struct ConvergenceProblem {
  RhsFn rhs;
  Vector x0;
  std::function<Vector(double)> exact;
  double t_end = 1.0;
};

/// Least-squares slope of log(error) against log(h) over h in
/// {0.1, 0.05, 0.025, 0.0125}. Empty when every error is (numerically) zero.
std::optional<double> order_estimate(Method method, const ConvergenceProblem& problem);

/// Trajectory CSV: header `t, x_1.., u_1.., y_1..`, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
/// Reads a trajectory written by write_trajectory_csv; column groups are
/// recovered from the header prefixes.
Trajectory read_trajectory_csv(std::istream& is);
Trajectory read_trajectory_csv(const std::string& path);

}  // namespace phl
