#include "phlearn/train.hpp"

#include "phlearn/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace phl {

void TrainConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h", "must be positive");
  if (t_end < 0.0) throw ConfigError("t_end", "must be nonnegative");
  if (lambda_sparsity < 0.0) throw ConfigError("lambda_sparsity", "must be nonnegative");
  if (lambda_dissip < 0.0) throw ConfigError("lambda_dissip", "must be nonnegative");
  if (lambda_equilibrium < 0.0) throw ConfigError("lambda_equilibrium", "must be nonnegative");
  if (!(adam.lr > 0.0)) throw ConfigError("adam.lr", "must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam.beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam.beta2", "must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("adam.eps", "must be positive");
  if (!(lr_final_ratio > 0.0)) throw ConfigError("lr_final_ratio", "must be positive");
  if (lr_decay_steps < 0) throw ConfigError("lr_decay_steps", "must be nonnegative");
  if (max_iterations < 0) throw ConfigError("max_iterations", "must be nonnegative");
  if (primal_dual.alpha < 0.0) throw ConfigError("primal_dual.alpha", "must be nonnegative");
  if (primal_dual.lambda0 < 0.0) throw ConfigError("primal_dual.lambda0", "must be nonnegative");
  if (primal_dual.epsilon < 0.0) throw ConfigError("primal_dual.epsilon", "must be nonnegative");
  if (primal_dual.noise_variance < 0.0) {
    throw ConfigError("primal_dual.noise_variance", "must be nonnegative");
  }
  if (primal_dual.inner_iterations < 1) {
    throw ConfigError("primal_dual.inner_iterations", "must be at least 1");
  }
}

// ---------------------------------------------------------------------------

double loss_mse(const std::vector<Trajectory>& measured, const std::vector<Trajectory>& simulated) {
  if (measured.size() != simulated.size() || measured.empty()) {
    throw ConfigError("trajectories", "measured and simulated sets differ in size or are empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    const Matrix& a = measured[i].outputs;
    const Matrix& b = simulated[i].outputs;
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
      throw ConfigError("trajectories", "grid mismatch in pair " + std::to_string(i));
    }
    total += (a - b).rowwise().squaredNorm().mean();
  }
  return total / static_cast<double>(measured.size());
}

Vector trapezoid_weights(const std::vector<double>& times) {
  const Index n = static_cast<Index>(times.size());
  Vector wt = Vector::Zero(n);
  for (Index k = 0; k + 1 < n; ++k) {
    const double dt = times[k + 1] - times[k];
    wt(k) += 0.5 * dt;
    wt(k + 1) += 0.5 * dt;
  }
  return wt;
}

namespace {

double span(const std::vector<double>& times) {
  return times.size() < 2 ? 0.0 : times.back() - times.front();
}

}  // namespace

double reg_sparsity(const Matrix& flows, const std::vector<double>& times) {
  const double T = span(times);
  if (T <= 0.0 || flows.size() == 0) return 0.0;
  return (trapezoid_weights(times).transpose() * flows.cwiseAbs()).sum() / T;
}

double reg_dissipativity(const Matrix& powers, const std::vector<double>& times, DissipMode mode) {
  const double T = span(times);
  if (T <= 0.0 || powers.size() == 0) return 0.0;
  const Vector wt = trapezoid_weights(times);
  if (mode == DissipMode::Integral) return (wt.transpose() * powers).sum() / T;
  return (wt.transpose() * (-powers).cwiseMax(0.0)).sum() / T;
}

double reg_equilibrium(const OdeSystem& sys, const Vector& w) {
  const Vector f =
      sys.rhs(0.0, Vector::Zero(sys.state_dim()), Vector::Zero(sys.input_dim()), w);
  return f.squaredNorm();
}

ObjectiveWeights config_weights(const TrainConfig& config) {
  return {1.0, config.lambda_sparsity, config.lambda_dissip, config.lambda_equilibrium};
}

// ---------------------------------------------------------------------------
// Simulation against data
// ---------------------------------------------------------------------------

namespace {

/// How one measured trajectory maps onto the integration grid.
struct Alignment {
  double t_end = 0.0;
  Index samples = 0;  // measured samples used
  Index stride = 1;   // integration steps per sample
};

Alignment align(const Trajectory& data, const TrainConfig& config, const OdeSystem& sys) {
  data.check();
  if (data.size() < 2) throw ConfigError("data", "trajectory needs at least two samples");
  if (std::abs(data.times.front()) > 1e-12) throw ConfigError("data", "trajectory must start at t = 0");
  if (data.states.cols() != sys.state_dim()) {
    throw ConfigError("data", "state dimension " + std::to_string(data.states.cols()) +
                                  " does not match the model (" +
                                  std::to_string(sys.state_dim()) + ")");
  }
  if (data.inputs.cols() != sys.input_dim()) {
    throw ConfigError("data", "input dimension does not match the model");
  }
  if (data.outputs.cols() != sys.output_dim()) {
    throw ConfigError("data", "output dimension does not match the model");
  }
  const double dt = data.times[1] - data.times[0];
  const double ratio = dt / config.h;
  const Index stride = static_cast<Index>(std::llround(ratio));
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio) {
    throw ConfigError("h", "sample spacing must be an integer multiple of the step");
  }
  Alignment a;
  a.stride = stride;
  const double horizon = config.t_end > 0.0 ? std::min(config.t_end, data.times.back())
                                            : data.times.back();
  a.samples = static_cast<Index>(std::llround(horizon / dt)) + 1;
  a.samples = std::min(a.samples, data.size());
  a.t_end = static_cast<double>(a.samples - 1) * dt;
  return a;
}

struct TrajectoryTerms {
  double fit = 0.0;
  double sparsity = 0.0;
  double dissip = 0.0;
  Vector grad;  // of weighted fit + sparsity + dissip
};

/// Channel value and (optionally) total derivative d(value)/dw = Cx S + Cw.
void channel_total(const OdeSystem& sys, Channel c, double t, const Vector& x, const Vector& u,
                   const Vector& w, const Matrix* S, Vector& value, Matrix& total) {
  if (S == nullptr) {
    sys.channel(c, t, x, u, w, value, nullptr, nullptr);
    return;
  }
  Matrix cx, cw;
  sys.channel(c, t, x, u, w, value, &cx, &cw);
  total = cw;
  total.noalias() += cx * (*S);
}

TrajectoryTerms trajectory_terms(const OdeSystem& sys, const Trajectory& data,
                                 const TrainConfig& config, const ObjectiveWeights& weights,
                                 const Vector& w, bool with_gradient) {
  const Alignment a = align(data, config, sys);
  const Vector x0 = data.states.row(0).transpose();
  const InputSignal u = data.input_signal();

  Trajectory sim;
  SensitivityTrace sens;
  if (with_gradient) {
    auto result = integrate_with_sensitivity(sys, x0, u, a.t_end, config.h, config.method, w);
    sim = std::move(result.first);
    sens = std::move(result.second);
  } else {
    sim = integrate(sys, x0, u, a.t_end, config.h, config.method, w);
  }

  const Index m = w.size();
  TrajectoryTerms out;
  if (with_gradient) out.grad = Vector::Zero(m);

  Vector value;
  Matrix total;
  // Fit term on the measured samples.
  const double inv_k = 1.0 / static_cast<double>(a.samples);
  for (Index k = 0; k < a.samples; ++k) {
    const Index j = k * a.stride;
    const Vector xk = sim.states.row(j).transpose();
    const Vector uk = sim.inputs.row(j).transpose();
    channel_total(sys, Channel::Output, sim.times[j], xk, uk, w,
                  with_gradient ? &sens.s[j] : nullptr, value, total);
    const Vector r = value - data.outputs.row(k).transpose();
    out.fit += inv_k * r.squaredNorm();
    if (with_gradient && weights.fit != 0.0) {
      out.grad.noalias() += (2.0 * inv_k * weights.fit) * (total.transpose() * r);
    }
  }

  // Regularizers on the integration grid.
  const bool want_sparsity = weights.sparsity != 0.0 && sys.channel_dim(Channel::LinkFlow) > 0;
  const bool want_dissip = weights.dissip != 0.0 && sys.channel_dim(Channel::ElementPower) > 0;
  if (want_sparsity || want_dissip) {
    const Vector wt = trapezoid_weights(sim.times);
    const double T = a.t_end;
    for (Index j = 0; j < sim.size(); ++j) {
      const Vector xj = sim.states.row(j).transpose();
      const Vector uj = sim.inputs.row(j).transpose();
      const Matrix* S = with_gradient ? &sens.s[j] : nullptr;
      const double c = wt(j) / T;
      if (want_sparsity) {
        channel_total(sys, Channel::LinkFlow, sim.times[j], xj, uj, w, S, value, total);
        out.sparsity += c * value.cwiseAbs().sum();
        if (S) {
          const Vector sg = value.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
          out.grad.noalias() += (c * weights.sparsity) * (total.transpose() * sg);
        }
      }
      if (want_dissip) {
        channel_total(sys, Channel::ElementPower, sim.times[j], xj, uj, w, S, value, total);
        Vector dp;
        if (config.dissip_mode == DissipMode::Integral) {
          out.dissip += c * value.sum();
          dp = Vector::Ones(value.size());
        } else {
          out.dissip += c * (-value).cwiseMax(0.0).sum();
          dp = value.unaryExpr([](double v) { return v < 0 ? -1.0 : 0.0; });
        }
        if (S) out.grad.noalias() += (c * weights.dissip) * (total.transpose() * dp);
      }
    }
  }
  return out;
}

}  // namespace

LossEvaluation evaluate_loss(const OdeSystem& sys, const std::vector<Trajectory>& data,
                             const std::vector<std::size_t>& batch, const TrainConfig& config,
                             const ObjectiveWeights& weights, const Vector& w,
                             bool with_gradient) {
  if (batch.empty()) throw ConfigError("data", "empty batch");
  require_dim(w.size(), sys.param_dim(), "parameter vector");
  std::vector<TrajectoryTerms> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    if (batch[i] >= data.size()) throw ConfigError("data", "batch index out of range");
    terms[i] = trajectory_terms(sys, data[batch[i]], config, weights, w, with_gradient);
  });

  // Reduction in batch order keeps results independent of the worker count.
  LossEvaluation ev;
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (with_gradient) ev.gradient = Vector::Zero(w.size());
  for (const auto& t : terms) {
    ev.fit += inv * t.fit;
    ev.sparsity += inv * t.sparsity;
    ev.dissip += inv * t.dissip;
    if (with_gradient) ev.gradient += inv * t.grad;
  }
  if (weights.equilibrium != 0.0) {
    const Vector x0 = Vector::Zero(sys.state_dim());
    const Vector u0 = Vector::Zero(sys.input_dim());
    if (with_gradient) {
      Vector f;
      Matrix fx, fw;
      sys.rhs_partials(0.0, x0, u0, w, f, fx, fw);
      ev.equilibrium = f.squaredNorm();
      ev.gradient.noalias() += (2.0 * weights.equilibrium) * (fw.transpose() * f);
    } else {
      ev.equilibrium = reg_equilibrium(sys, w);
    }
  }
  ev.total = weights.fit * ev.fit + weights.sparsity * ev.sparsity + weights.dissip * ev.dissip +
             weights.equilibrium * ev.equilibrium;
  return ev;
}

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

Vector grad_total_loss(const OdeSystem& sys, const std::vector<Trajectory>& data,
                       const TrainConfig& config, const Vector& w) {
  return evaluate_loss(sys, data, all_indices(data.size()), config, config_weights(config), w, true)
      .gradient;
}

std::vector<Trajectory> simulate_like(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                      const TrainConfig& config, const Vector& w) {
  std::vector<Trajectory> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const Alignment a = align(data[i], config, sys);
    const Trajectory sim = integrate(sys, data[i].states.row(0).transpose(),
                                     data[i].input_signal(), a.t_end, config.h, config.method, w);
    Trajectory& t = out[i];
    t.times.resize(static_cast<std::size_t>(a.samples));
    t.states.resize(a.samples, sim.states.cols());
    t.inputs.resize(a.samples, sim.inputs.cols());
    t.outputs.resize(a.samples, sim.outputs.cols());
    for (Index k = 0; k < a.samples; ++k) {
      const Index j = k * a.stride;
      t.times[static_cast<std::size_t>(k)] = sim.times[static_cast<std::size_t>(j)];
      t.states.row(k) = sim.states.row(j);
      t.inputs.row(k) = sim.inputs.row(j);
      t.outputs.row(k) = sim.outputs.row(j);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void adam_step(Vector& w, const Vector& grad, AdamState& state, const AdamConfig& hyper) {
  require_dim(grad.size(), w.size(), "gradient");
  if (state.m.size() != w.size()) state.m = Vector::Zero(w.size());
  if (state.v.size() != w.size()) state.v = Vector::Zero(w.size());
  state.t += 1;
  state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad;
  state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  const double step = hyper.lr / c1;
  const double root_c2 = std::sqrt(c2);
  w.array() -= step * state.m.array() / (state.v.array().sqrt() / root_c2 + hyper.eps);
}

TrainState initial_state(const Vector& w0, const TrainConfig& config) {
  TrainState s;
  s.w = w0;
  s.adam.m = Vector::Zero(w0.size());
  s.adam.v = Vector::Zero(w0.size());
  s.lambda = config.primal_dual.lambda0;
  s.alpha = config.primal_dual.alpha;
  return s;
}

std::vector<std::size_t> batch_for(const TrainConfig& config, int iteration, std::size_t n_data) {
  if (n_data == 0) throw ConfigError("data", "no trajectories");
  if (config.batch == BatchStrategy::Full) return all_indices(n_data);
  // splitmix64 of (seed, iteration): depends only on these two numbers, so a
  // resumed run draws the same batches.
  std::uint64_t z = config.seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(iteration) + 1));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return {static_cast<std::size_t>(z % n_data)};
}

namespace {

double lr_at(const TrainConfig& config, int iteration) {
  if (config.lr_final_ratio == 1.0 || config.lr_decay_steps == 0) return config.adam.lr;
  const double frac = static_cast<double>(std::min(iteration, config.lr_decay_steps)) /
                      static_cast<double>(config.lr_decay_steps);
  return config.adam.lr * std::pow(config.lr_final_ratio, frac);
}

bool finite(const LossEvaluation& ev) {
  return std::isfinite(ev.total) && ev.gradient.allFinite();
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

TrainReport train(const OdeSystem& sys, const std::vector<Trajectory>& data,
                  const TrainConfig& config, TrainState state) {
  config.validate();
  if (data.empty()) throw ConfigError("data", "no trajectories");
  require_dim(state.w.size(), sys.param_dim(), "parameter vector");
  const ObjectiveWeights weights = config_weights(config);

  TrainReport report;
  report.first_iteration = state.iteration;
  Vector previous = state.w;  // last iterate whose loss was finite
  for (int it = state.iteration; it < config.max_iterations; ++it) {
    const auto t0 = Clock::now();
    LossEvaluation ev;
    bool ok = true;
    try {
      ev = evaluate_loss(sys, data, batch_for(config, it, data.size()), config, weights, state.w,
                         true);
      ok = finite(ev);
    } catch (const IntegrationError& e) {
      ok = false;
      report.message = e.what();
    }
    if (!ok) {
      report.diverged = true;
      if (report.message.empty()) report.message = "non-finite loss";
      report.message += " at iteration " + std::to_string(it);
      state.w = previous;
      break;
    }
    previous = state.w;
    report.fit.push_back(ev.fit);
    report.reg.push_back(ev.total - ev.fit);
    report.lambda.push_back(0.0);
    if (ev.total <= config.tolerance) {
      report.wall_ms.push_back(ms_since(t0));
      report.converged = true;
      break;
    }
    AdamConfig hyper = config.adam;
    hyper.lr = lr_at(config, it);
    adam_step(state.w, ev.gradient, state.adam, hyper);
    state.iteration = it + 1;
    report.wall_ms.push_back(ms_since(t0));
  }
  report.iterations = static_cast<int>(report.fit.size());
  report.w = state.w;
  report.state = std::move(state);
  return report;
}

TrainReport train(const OdeSystem& sys, const std::vector<Trajectory>& data,
                  const TrainConfig& config, const Vector& w0) {
  return train(sys, data, config, initial_state(w0, config));
}

// ---------------------------------------------------------------------------
// Primal-dual sparsity
// ---------------------------------------------------------------------------

double default_epsilon(const std::vector<Trajectory>& data, double noise_variance) {
  if (noise_variance > 0.0) return 10.0 * noise_variance;
  Index rows = 0;
  for (const auto& t : data) rows += t.outputs.rows();
  if (rows < 2 || data.empty()) throw ConfigError("data", "not enough samples for a default epsilon");
  Matrix all(rows, data.front().outputs.cols());
  Index r = 0;
  for (const auto& t : data) {
    all.middleRows(r, t.outputs.rows()) = t.outputs;
    r += t.outputs.rows();
  }
  const Matrix centered = all.rowwise() - all.colwise().mean();
  // Summed over output components, matching the scale of J.
  const double variance = centered.squaredNorm() / static_cast<double>(rows);
  if (!(variance > 0.0)) throw ConfigError("primal_dual.epsilon", "outputs are constant; set epsilon");
  return 1e-3 * variance;
}

double dual_update(double lambda, double alpha, double fit, double epsilon) {
  return std::max(0.0, lambda + alpha * (fit - epsilon));
}

TrainReport train_sparse_primal_dual(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                     const TrainConfig& config, TrainState state) {
  config.validate();
  if (data.empty()) throw ConfigError("data", "no trajectories");
  require_dim(state.w.size(), sys.param_dim(), "parameter vector");
  if (sys.channel_dim(Channel::LinkFlow) == 0) {
    throw ConfigError("model", "primal-dual sparsity needs a model with link flows");
  }
  const double eps = config.primal_dual.epsilon > 0.0
                         ? config.primal_dual.epsilon
                         : default_epsilon(data, config.primal_dual.noise_variance);
  const int inner = config.primal_dual.inner_iterations;
  const auto everything = all_indices(data.size());

  TrainReport report;
  report.first_iteration = state.iteration;
  Vector previous = state.w;
  for (int it = state.iteration; it < config.max_iterations; ++it) {
    const auto t0 = Clock::now();
    ObjectiveWeights weights{state.lambda, 1.0, config.lambda_dissip, config.lambda_equilibrium};
    LossEvaluation ev;
    bool ok = true;
    try {
      ev = evaluate_loss(sys, data, batch_for(config, it, data.size()), config, weights, state.w,
                         true);
      ok = finite(ev);
    } catch (const IntegrationError& e) {
      ok = false;
      report.message = e.what();
    }
    if (!ok) {
      report.diverged = true;
      if (report.message.empty()) report.message = "non-finite loss";
      report.message += " at iteration " + std::to_string(it);
      state.w = previous;
      break;
    }
    previous = state.w;
    report.fit.push_back(ev.fit);
    report.reg.push_back(ev.sparsity);
    report.lambda.push_back(state.lambda);

    AdamConfig hyper = config.adam;
    hyper.lr = lr_at(config, it);
    adam_step(state.w, ev.gradient, state.adam, hyper);
    state.iteration = it + 1;

    if (state.iteration % inner == 0) {
      // Dual step on the full data set at the new primal iterate.
      LossEvaluation full;
      try {
        full = evaluate_loss(sys, data, everything, config,
                             ObjectiveWeights{1.0, 1.0, 0.0, 0.0}, state.w, false);
      } catch (const IntegrationError& e) {
        report.diverged = true;
        report.message = std::string(e.what()) + " at iteration " + std::to_string(it);
        state.w = previous;
        report.wall_ms.push_back(ms_since(t0));
        break;
      }
      if (full.fit <= 1.1 * eps && (state.best_sparsity < 0.0 || full.sparsity < state.best_sparsity)) {
        state.best_w = state.w;
        state.best_fit = full.fit;
        state.best_sparsity = full.sparsity;
      }
      const double gap = full.fit - eps;
      const int sign = gap > 0.0 ? 1 : (gap < 0.0 ? -1 : 0);
      if (sign != 0) {
        if (state.last_sign != 0 && sign != state.last_sign) {
          if (++state.flips >= 3) {
            state.alpha *= 0.5;
            state.flips = 0;
          }
        } else {
          state.flips = 0;
        }
        state.last_sign = sign;
      }
      state.lambda = dual_update(state.lambda, state.alpha, full.fit, eps);
    }
    report.wall_ms.push_back(ms_since(t0));
  }
  report.iterations = static_cast<int>(report.fit.size());
  if (state.best_sparsity >= 0.0) {
    report.w = state.best_w;
    report.converged = true;
    report.message = "best feasible iterate: J = " + std::to_string(state.best_fit) +
                     ", R = " + std::to_string(state.best_sparsity) +
                     ", epsilon = " + std::to_string(eps);
  } else {
    report.w = state.w;
    if (report.message.empty()) {
      report.message = "no iterate reached J <= 1.1 epsilon (epsilon = " + std::to_string(eps) + ")";
    }
  }
  report.state = std::move(state);
  return report;
}

TrainReport train_sparse_primal_dual(const OdeSystem& sys, const std::vector<Trajectory>& data,
                                     const TrainConfig& config, const Vector& w0) {
  return train_sparse_primal_dual(sys, data, config, initial_state(w0, config));
}

void write_loss_curve(std::ostream& os, const TrainReport& report) {
  os << "iter,J,R,lambda,wall_ms\n";
  os.precision(17);
  for (std::size_t i = 0; i < report.fit.size(); ++i) {
    os << report.first_iteration + static_cast<int>(i) << ',' << report.fit[i] << ',' << report.reg[i] << ',' << report.lambda[i] << ','
       << (i < report.wall_ms.size() ? report.wall_ms[i] : 0.0) << '\n';
  }
}

}  // namespace phl
