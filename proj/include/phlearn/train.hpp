#pragma once

#include "phlearn/odesolve.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace phl {

enum class DissipMode {
  Hinge,     // (1/T) int max(0, -p) dt: penalizes energy generation only
  Integral,  // (1/T) int p dt
};
enum class BatchStrategy { Full, OneTrajectory };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct PrimalDualConfig {
  double epsilon = 0.0;      // accuracy target; <= 0 selects the default rule
  double noise_variance = 0.0;  // known measurement-noise variance, 0 if unknown
  double alpha = 0.1;        // dual step
  double lambda0 = 0.0;
  int inner_iterations = 50;
};

struct TrainConfig {
  Method method = Method::Midpoint;
  double h = 0.05;
  double t_end = 0.0;  // training horizon; 0 uses the full data horizon
  double lambda_sparsity = 0.0;
  double lambda_dissip = 0.0;
  double lambda_equilibrium = 0.0;
  DissipMode dissip_mode = DissipMode::Hinge;
  AdamConfig adam;
  // Exponential decay of lr to lr * lr_final_ratio over lr_decay_steps
  // iterations, constant afterwards; 0 steps disables the decay.
  double lr_final_ratio = 1.0;
  int lr_decay_steps = 0;
  PrimalDualConfig primal_dual;
  int max_iterations = 1000;
  double tolerance = 1e-12;  // stop once the total loss is at or below this
  std::uint64_t seed = 0;
  BatchStrategy batch = BatchStrategy::Full;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

/// Mean over trajectories of the time-mean squared output error.
double loss_mse(const std::vector<Trajectory>& measured, const std::vector<Trajectory>& simulated);

/// Trapezoid weights on a grid, summing to times.back() - times.front().
Vector trapezoid_weights(const std::vector<double>& times);

/// sum_j (1/T) int |f_j| dt; flows has one column per link.
double reg_sparsity(const Matrix& flows, const std::vector<double>& times);

/// sum_i (1/T) int max(0, -p_i) dt (hinge) or (1/T) int p_i dt (integral).
double reg_dissipativity(const Matrix& powers, const std::vector<double>& times,
                         DissipMode mode = DissipMode::Hinge);

/// ||f(0, u = 0; w)||^2
double reg_equilibrium(const OdeSystem& sys, const Vector& w);

/// Multipliers of each term in the objective.
struct ObjectiveWeights {
  double fit = 1.0;
  double sparsity = 0.0;
  double dissip = 0.0;
  double equilibrium = 0.0;
};

struct LossEvaluation {
  double fit = 0.0;          // J
  double sparsity = 0.0;     // R_sparsity
  double dissip = 0.0;
  double equilibrium = 0.0;
  double total = 0.0;        // weighted sum
  Vector gradient;           // of total; empty when not requested
};

/// Simulates every selected trajectory from its measured initial state with
/// the measured input and returns the weighted objective. With
/// `with_gradient`, the gradient is assembled from forward sensitivities.
LossEvaluation evaluate_loss(const OdeSystem& sys, const std::vector<Trajectory>& data,
                             const std::vector<std::size_t>& batch, const TrainConfig& config,
                             const ObjectiveWeights& weights, const Vector& w,
                             bool with_gradient);

/// Gradient of J + sum lambda_r R_r over all trajectories.
Vector grad_total_loss(const OdeSystem& sys, const std::vector<Trajectory>& data,
                       const TrainConfig& config, const Vector& w);
ObjectiveWeights config_weights(const TrainConfig& config);

/// Simulated counterparts of `data` at parameters w.
std::vector<Trajectory> simulate_like(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                      const TrainConfig& config, const Vector& w);

// ---------------------------------------------------------------------------
// Optimizer and training loops
// ---------------------------------------------------------------------------

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(Vector& w, const Vector& grad, AdamState& state, const AdamConfig& hyper);

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  Vector w;
  AdamState adam;
  int iteration = 0;
  // primal-dual
  double lambda = 0.0;
  double alpha = 0.0;
  int flips = 0;
  int last_sign = 0;
  Vector best_w;
  double best_fit = 0.0;
  double best_sparsity = -1.0;  // < 0: no feasible iterate yet
};

TrainState initial_state(const Vector& w0, const TrainConfig& config);

struct TrainReport {
  std::vector<double> fit;        // J per iteration
  std::vector<double> reg;        // R per iteration
  std::vector<double> lambda;     // dual variable (primal-dual), else 0
  std::vector<double> wall_ms;
  Vector w;                       // final (or returned) parameters
  TrainState state;               // state after the last completed iteration
  int iterations = 0;
  int first_iteration = 0;        // global index of fit[0]
  bool converged = false;
  bool diverged = false;
  std::string message;
};

/// Adam on J + sum lambda_r R_r. Stops at max_iterations, when the loss falls
/// to the tolerance, or with `diverged` set and the last finite iterate when
/// the loss becomes non-finite.
TrainReport train(const OdeSystem& sys, const std::vector<Trajectory>& data,
                  const TrainConfig& config, TrainState state);
TrainReport train(const OdeSystem& sys, const std::vector<Trajectory>& data,
                  const TrainConfig& config, const Vector& w0);

/// Accuracy target: 10 x noise variance when known, else 1e-3 x output variance.
double default_epsilon(const std::vector<Trajectory>& data, double noise_variance = 0.0);

/// Dual update with projection onto lambda >= 0.
double dual_update(double lambda, double alpha, double fit, double epsilon);

/// Alternates `inner_iterations` Adam steps on R + lambda_k (J - eps) with the
/// projected dual ascent, halving alpha after 3 consecutive sign changes of
/// J - eps. Returns the feasible iterate (J <= 1.1 eps) with the smallest R,
/// or the last iterate when none was feasible.
TrainReport train_sparse_primal_dual(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                     const TrainConfig& config, TrainState state);
TrainReport train_sparse_primal_dual(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                     const TrainConfig& config, const Vector& w0);

/// Batch of iteration `it`: all trajectories, or one chosen by hashing (seed, it).
std::vector<std::size_t> batch_for(const TrainConfig& config, int iteration, std::size_t n_data);

/// `iter, J, R, lambda, wall_ms`
void write_loss_curve(std::ostream& os, const TrainReport& report);

}  // namespace phl
