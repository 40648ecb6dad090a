#include "phlearn/network.hpp"
#include "phlearn/pendulum.hpp"
#include "phlearn/reference.hpp"
#include "phlearn/train.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <sstream>

using namespace phl;

namespace {

/// xdot = -w x with a single unconstrained parameter.
class Decay final : public OdeSystem {
 public:
  Decay() { params_.append("w", Vector::Constant(1, 1.0)); }
  using OdeSystem::rhs;
  Index state_dim() const override { return 1; }
  void rhs(double, const Vector& x, const Vector&, const Vector& w, Vector& f) const override {
    f = -w(0) * x;
  }
  void rhs_partials(double, const Vector& x, const Vector&, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override {
    f = -w(0) * x;
    dfdx = Matrix::Constant(1, 1, -w(0));
    dfdw = Matrix::Constant(1, 1, -x(0));
  }
};

Trajectory scalar_traj(std::vector<double> times, std::vector<double> y) {
  Trajectory t;
  t.times = times;
  const Index n = static_cast<Index>(times.size());
  t.states = Matrix::Map(y.data(), n, 1);
  t.outputs = t.states;
  t.inputs.resize(n, 0);
  return t;
}

std::vector<Trajectory> decay_data(double w_true, double t_end = 2.0, double h = 0.1) {
  Decay sys;
  std::vector<Trajectory> data;
  for (double x0 : {1.0, -0.5}) {
    data.push_back(integrate(sys, Vector::Constant(1, x0), InputSignal::none(), t_end, h,
                             Method::Midpoint, Vector::Constant(1, w_true)));
  }
  return data;
}

TrainConfig decay_config() {
  TrainConfig c;
  c.h = 0.1;
  c.adam.lr = 0.05;
  c.max_iterations = 300;
  return c;
}

double total_loss(const OdeSystem& sys, const std::vector<Trajectory>& data,
                  const TrainConfig& config, const Vector& w) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate_loss(sys, data, all, config, config_weights(config), w, false).total;
}

Vector fd_gradient(const OdeSystem& sys, const std::vector<Trajectory>& data,
                   const TrainConfig& config, const Vector& w, const std::vector<Index>& coords,
                   double step = 1e-6) {
  Vector g(static_cast<Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    Vector wp = w, wm = w;
    wp(coords[i]) += step;
    wm(coords[i]) -= step;
    g(static_cast<Index>(i)) =
        (total_loss(sys, data, config, wp) - total_loss(sys, data, config, wm)) / (2 * step);
  }
  return g;
}

Vector pick(const Vector& v, const std::vector<Index>& coords) {
  Vector out(static_cast<Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) out(static_cast<Index>(i)) = v(coords[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

TEST(Loss, IdenticalTrajectoriesGiveZero) {
  const auto data = decay_data(1.0);
  EXPECT_EQ(loss_mse(data, data), 0.0);
}

TEST(Loss, ConstantOffset) {
  auto a = scalar_traj({0, 0.3, 0.7, 1.1}, {1, 2, 3, 4});
  auto b = a;
  b.outputs.array() += 0.1;
  EXPECT_NEAR(loss_mse({a}, {b}), 0.01, 1e-15);
}

TEST(Loss, TwoSampleHandExample) {
  Trajectory a;
  a.times = {0, 1};
  a.outputs.resize(2, 2);
  a.outputs << 0, 1, 0, 0;
  a.states = a.outputs;
  a.inputs.resize(2, 0);
  Trajectory b = a;
  b.outputs.setZero();
  EXPECT_DOUBLE_EQ(loss_mse({a}, {b}), 0.5);
}

TEST(Loss, GridMismatchThrows) {
  auto a = scalar_traj({0, 1}, {0, 0});
  auto b = scalar_traj({0, 1, 2}, {0, 0, 0});
  EXPECT_THROW(loss_mse({a}, {b}), ConfigError);
  EXPECT_THROW(loss_mse({a}, {}), ConfigError);
}

TEST(Sparsity, HandExamples) {
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  EXPECT_EQ(reg_sparsity(Matrix::Zero(5, 3), grid), 0.0);
  Matrix two(5, 2);
  two.col(0).setOnes();
  two.col(1).setConstant(-1.0);
  EXPECT_NEAR(reg_sparsity(two, grid), 2.0, 1e-15);
  Matrix ramp(3, 1);
  ramp << 0.0, 0.5, 1.0;
  EXPECT_NEAR(reg_sparsity(ramp, {0.0, 0.5, 1.0}), 0.5, 1e-15);
}

TEST(Dissipativity, HandExamples) {
  const double h = 0.01;
  std::vector<double> grid;
  for (int k = 0; k <= 100; ++k) grid.push_back(k * h);
  Matrix positive = Matrix::Constant(101, 2, 0.3);
  EXPECT_EQ(reg_dissipativity(positive, grid), 0.0);
  EXPECT_NEAR(reg_dissipativity(Matrix::Constant(101, 1, -1.0), grid), 1.0, 1e-14);
  Matrix wave(101, 1);
  for (int k = 0; k <= 100; ++k) wave(k, 0) = std::sin(2 * M_PI * grid[k]);
  // Trapezoid error on the negative half-period: (h^2 / 12) * |f'(1) - f'(1/2)| = (pi / 3) h^2.
  EXPECT_NEAR(reg_dissipativity(wave, grid), 1.0 / M_PI, 1.01 * M_PI / 3.0 * h * h);
  // Literal form: the signed integral of one full period vanishes.
  EXPECT_NEAR(reg_dissipativity(wave, grid, DissipMode::Integral), 0.0, 1e-14);
}

TEST(Equilibrium, LinearUnforcedSystemIsZero) {
  auto sys = assemble_ode(build_msd_network({2.0, 3.0, 0.5, Signal::constant(0.0), true}));
  EXPECT_EQ(reg_equilibrium(*sys, sys->parameters().values()), 0.0);
}

TEST(Equilibrium, SurrogateOutputBias) {
  PendulumSurrogate sys(50);
  Vector w = sys.parameters().values();
  const Index nh = sys.transformer().param_count();
  w.head(nh).setZero();
  w(nh - 2) = 0.1;  // output bias of the cart channel; M = 1
  EXPECT_NEAR(reg_equilibrium(sys, w), 0.01, 1e-15);
}

// ---------------------------------------------------------------------------
// Gradient
// ---------------------------------------------------------------------------

TEST(Gradient, VanishesAtDataGeneratingParameters) {
  auto net = build_msd_network({1.5, 2.0, 0.4, Signal::sine(1.0, 0.3), true});
  auto sys = assemble_ode(net);
  const Vector w = sys->parameters().values();
  std::vector<Trajectory> data;
  for (double q0 : {0.5, -1.0}) {
    Vector x0(2);
    x0 << q0, 0.2;
    data.push_back(integrate(*sys, x0, InputSignal::none(), 4.0, 0.05, Method::Midpoint, w));
  }
  TrainConfig c;
  c.h = 0.05;
  EXPECT_LE(grad_total_loss(*sys, data, c, w).norm(), 1e-6);
}

TEST(Gradient, ScalarDecaySignFromScan) {
  const auto data = decay_data(1.0);
  Decay sys;
  const TrainConfig c = decay_config();
  const Vector g = grad_total_loss(sys, data, c, Vector::Constant(1, 2.0));
  // The loss falls when w moves from 2 toward 1.
  const double l2 = total_loss(sys, data, c, Vector::Constant(1, 2.0));
  const double l19 = total_loss(sys, data, c, Vector::Constant(1, 1.9));
  EXPECT_LT(l19, l2);
  EXPECT_GT(g(0), 0.0);
  const Vector fd = fd_gradient(sys, data, c, Vector::Constant(1, 2.0), {0});
  EXPECT_LE(test::rel_error(g, fd), 1e-6);
}

TEST(Gradient, NetworkWithAllRegularizers) {
  auto net = build_msd_network({1.0, 1.0, 0.3, Signal::sine(0.7, 0.4), true});
  auto sys = assemble_ode(net);
  std::vector<Trajectory> data;
  Vector x0(2);
  x0 << 0.8, -0.1;
  data.push_back(integrate(*sys, x0, InputSignal::none(), 3.0, 0.05, Method::Rk4,
                           sys->parameters().values()));
  Vector w = sys->parameters().values();
  w.array() += 0.3;
  for (DissipMode mode : {DissipMode::Hinge, DissipMode::Integral}) {
    TrainConfig c;
    c.method = Method::Rk4;
    c.h = 0.05;
    c.lambda_sparsity = 0.3;
    c.lambda_dissip = 0.2;
    c.lambda_equilibrium = 0.1;
    c.dissip_mode = mode;
    const Vector g = grad_total_loss(*sys, data, c, w);
    const std::vector<Index> all{0, 1, 2};
    EXPECT_LE(test::rel_error(g, fd_gradient(*sys, data, c, w, all)), 1e-5);
  }
}

TEST(Gradient, PendulumSurrogateFiniteDifferences) {
  PendulumDataSpec spec;
  spec.t_end = 2.0;
  const auto data = generate_pendulum_data(pendulum_training_ics(), spec);
  PendulumSurrogate sys(50);
  TrainConfig c;
  c.h = 0.05;
  c.lambda_equilibrium = 0.1;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Index> coord(0, sys.param_dim() - 1);
  for (int draw = 0; draw < 3; ++draw) {
    PendulumSurrogate random(50, {}, 100 + draw);
    const Vector w = random.parameters().values();
    std::vector<Index> coords;
    for (int i = 0; i < 4; ++i) coords.push_back(coord(rng));
    coords.push_back(sys.param_dim() - 1 - draw);  // a friction or inertia entry
    const Vector g = grad_total_loss(sys, data, c, w);
    EXPECT_LE(test::rel_error(pick(g, coords), fd_gradient(sys, data, c, w, coords)), 1e-3)
        << "draw " << draw;
  }
}

TEST(Gradient, SampleSpacingMultipleOfStep) {
  const auto coarse = decay_data(1.0, 2.0, 0.2);
  Decay sys;
  TrainConfig c = decay_config();
  c.h = 0.05;  // four steps per sample
  const Vector w = Vector::Constant(1, 1.4);
  EXPECT_LE(test::rel_error(grad_total_loss(sys, coarse, c, w), fd_gradient(sys, coarse, c, w, {0})),
            1e-6);
  c.h = 0.15;
  EXPECT_THROW(grad_total_loss(sys, coarse, c, w), ConfigError);
}

TEST(Gradient, HorizonTruncatesData) {
  const auto data = decay_data(1.0, 2.0, 0.1);
  Decay sys;
  TrainConfig c = decay_config();
  c.t_end = 1.0;
  const auto sims = simulate_like(sys, data, c, Vector::Constant(1, 1.0));
  ASSERT_EQ(sims.front().size(), 11);
  EXPECT_DOUBLE_EQ(sims.front().times.back(), 1.0);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST(Adam, FirstStepHasMagnitudeLr) {
  Vector w = Vector::Constant(1, 0.5);
  AdamState s;
  adam_step(w, Vector::Constant(1, 1.0), s, {});
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  EXPECT_NEAR(w(0) - 0.5, -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.t, 1);
}

TEST(Adam, ZeroGradientLeavesWUnchanged) {
  Vector w = Vector::LinSpaced(4, -1, 1);
  const Vector w0 = w;
  AdamState s;
  adam_step(w, Vector::Zero(4), s, {});
  EXPECT_EQ(w, w0);
}

TEST(Adam, ConstantGradientStepsStayNearLr) {
  Vector w = Vector::Zero(1);
  AdamState s;
  adam_step(w, Vector::Constant(1, 3.0), s, {});
  const double d1 = std::abs(w(0));
  const double before = w(0);
  adam_step(w, Vector::Constant(1, 3.0), s, {});
  const double d2 = std::abs(w(0) - before);
  EXPECT_LE(d2, d1 * 1.01);
  EXPECT_NEAR(d2, 0.001, 1e-6);
}

TEST(Adam, MatchesHandRecursionOverSeveralSteps) {
  const AdamConfig hp{0.01, 0.8, 0.99, 1e-8};
  Vector w = Vector::Constant(1, 1.0);
  AdamState s;
  double m = 0, v = 0, x = 1.0;
  const double grads[] = {0.5, -2.0, 1.5, 0.1};
  for (int k = 0; k < 4; ++k) {
    adam_step(w, Vector::Constant(1, grads[k]), s, hp);
    m = 0.8 * m + 0.2 * grads[k];
    v = 0.99 * v + 0.01 * grads[k] * grads[k];
    const double mh = m / (1 - std::pow(0.8, k + 1));
    const double vh = v / (1 - std::pow(0.99, k + 1));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(w(0), x, 1e-14);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(Train, StopsImmediatelyAtDataGeneratingParameters) {
  const auto data = decay_data(1.3);
  Decay sys;
  const auto report = train(sys, data, decay_config(), Vector::Constant(1, 1.3));
  EXPECT_TRUE(report.converged);
  EXPECT_EQ(report.iterations, 1);
  EXPECT_EQ(report.w(0), 1.3);
}

TEST(Train, RecoversScalarRate) {
  const auto data = decay_data(1.0);
  Decay sys;
  TrainConfig c = decay_config();
  c.max_iterations = 600;
  c.lr_final_ratio = 0.01;
  c.lr_decay_steps = 600;
  const auto report = train(sys, data, c, Vector::Constant(1, 2.0));
  EXPECT_FALSE(report.diverged);
  EXPECT_NEAR(report.w(0), 1.0, 1e-3);
  EXPECT_LT(report.fit.back(), report.fit.front());
  EXPECT_EQ(report.fit.size(), report.reg.size());
  EXPECT_EQ(report.fit.size(), report.lambda.size());
  EXPECT_EQ(report.fit.size(), report.wall_ms.size());
}

TEST(Train, LearnsMsdCoefficients) {
  auto truth = assemble_ode(build_msd_network({1.0, 2.0, 0.5, Signal::sine(1.0, 0.3), true}));
  std::vector<Trajectory> data;
  for (double q0 : {1.0, -0.5}) {
    Vector x0(2);
    x0 << q0, 0.0;
    data.push_back(integrate(*truth, x0, InputSignal::none(), 5.0, 0.05, Method::Midpoint,
                             truth->parameters().values()));
  }
  auto model = assemble_ode(build_msd_network({1.0, 1.0, 1.0, Signal::sine(1.0, 0.3), true}));
  TrainConfig c;
  c.h = 0.05;
  c.adam.lr = 0.02;
  c.max_iterations = 1500;
  c.lr_final_ratio = 0.05;
  c.lr_decay_steps = 1500;
  const auto report = train(*model, data, c, model->parameters().values());
  EXPECT_LT(report.fit.back(), 1e-6);
  const Vector effective = report.w.cwiseAbs2();
  const Vector expected = truth->parameters().values().cwiseAbs2();
  EXPECT_LE(test::rel_error(effective, expected), 1e-2);
}

TEST(Train, DivergenceReturnsLastFiniteIterate) {
  const auto data = decay_data(-2.0, 2.0, 0.1);  // growing data pulls w negative
  Decay sys;
  TrainConfig c = decay_config();
  c.adam.lr = 1e6;
  c.max_iterations = 10;
  const auto report = train(sys, data, c, Vector::Constant(1, 0.0));
  EXPECT_TRUE(report.diverged);
  EXPECT_FALSE(report.message.empty());
  EXPECT_TRUE(report.w.allFinite());
  EXPECT_TRUE(std::isfinite(total_loss(sys, data, c, report.w)));
}

TEST(Train, InvalidConfigRejected) {
  TrainConfig c;
  c.adam.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.adam.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda_dissip = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, BitReproducibleAndResumable) {
  const auto data = decay_data(0.7);
  Decay sys;
  TrainConfig c = decay_config();
  c.batch = BatchStrategy::OneTrajectory;
  c.seed = 42;
  c.max_iterations = 40;
  c.lr_final_ratio = 0.1;
  c.lr_decay_steps = 30;
  const auto full = train(sys, data, c, Vector::Constant(1, 2.0));
  const auto again = train(sys, data, c, Vector::Constant(1, 2.0));
  EXPECT_EQ(full.w(0), again.w(0));
  EXPECT_EQ(full.fit, again.fit);

  TrainConfig half = c;
  half.max_iterations = 17;
  auto first = train(sys, data, half, Vector::Constant(1, 2.0));
  const auto resumed = train(sys, data, c, first.state);
  EXPECT_EQ(resumed.first_iteration, 17);
  EXPECT_EQ(resumed.w(0), full.w(0));
  for (std::size_t i = 0; i < resumed.fit.size(); ++i) EXPECT_EQ(resumed.fit[i], full.fit[17 + i]);
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  PendulumDataSpec spec;
  spec.t_end = 1.0;
  const auto data = generate_pendulum_data(pendulum_training_ics(), spec);
  PendulumSurrogate sys(8);
  TrainConfig c;
  c.h = 0.05;
  c.max_iterations = 3;
  ::setenv("PHLEARN_THREADS", "1", 1);
  const auto one = train(sys, data, c, sys.parameters().values());
  ::setenv("PHLEARN_THREADS", "4", 1);
  const auto four = train(sys, data, c, sys.parameters().values());
  ::unsetenv("PHLEARN_THREADS");
  EXPECT_EQ(one.w, four.w);
}

TEST(Batch, OneTrajectoryDrawsAreDeterministicAndCover) {
  TrainConfig c;
  c.batch = BatchStrategy::OneTrajectory;
  c.seed = 9;
  std::set<std::size_t> seen;
  for (int it = 0; it < 100; ++it) {
    const auto b = batch_for(c, it, 5);
    ASSERT_EQ(b.size(), 1u);
    ASSERT_LT(b[0], 5u);
    EXPECT_EQ(b, batch_for(c, it, 5));
    seen.insert(b[0]);
  }
  EXPECT_EQ(seen.size(), 5u);
  c.batch = BatchStrategy::Full;
  EXPECT_EQ(batch_for(c, 3, 4).size(), 4u);
}

TEST(LossCurve, HeaderAndRows) {
  TrainReport r;
  r.fit = {1.0, 0.5};
  r.reg = {0.0, 0.1};
  r.lambda = {0.0, 0.2};
  r.wall_ms = {3.0, 4.0};
  r.first_iteration = 5;
  std::ostringstream os;
  write_loss_curve(os, r);
  EXPECT_EQ(os.str(), "iter,J,R,lambda,wall_ms\n5,1,0,0,3\n6,0.5,0.10000000000000001,0.20000000000000001,4\n");
}

// ---------------------------------------------------------------------------
// Primal-dual
// ---------------------------------------------------------------------------

TEST(PrimalDual, DualUpdateExamples) {
  EXPECT_NEAR(dual_update(0.0, 0.1, 0.5, 0.1), 0.04, 1e-15);
  EXPECT_EQ(dual_update(0.01, 1.0, 0.0, 0.1), 0.0);
}

TEST(PrimalDual, DefaultEpsilon) {
  auto a = scalar_traj({0, 1, 2, 3}, {1, -1, 1, -1});
  EXPECT_NEAR(default_epsilon({a}), 1e-3, 1e-15);
  EXPECT_NEAR(default_epsilon({a}, 0.02), 0.2, 1e-15);
}

TEST(PrimalDual, RequiresLinkFlows) {
  const auto data = decay_data(1.0);
  Decay sys;
  EXPECT_THROW(train_sparse_primal_dual(sys, data, decay_config(), Vector::Constant(1, 1.0)),
               ConfigError);
}

TEST(PrimalDual, PrunesSpuriousSpring) {
  const Network truth_net = build_sparse_toy_network();
  auto truth = assemble_ode(truth_net);
  std::vector<Trajectory> data;
  for (double p0 : {0.0, 0.5}) {
    Vector x0 = Vector::Zero(truth->state_dim());
    x0(truth->state_dim() - 1) = p0;
    data.push_back(integrate(*truth, x0, InputSignal::none(), 8.0, 0.05, Method::Midpoint,
                             truth->parameters().values()));
  }
  SparseToySpec start;
  start.d = 0.8;
  start.k = 0.5;
  auto model = assemble_ode(build_sparse_toy_network(start));
  TrainConfig c;
  c.h = 0.05;
  c.adam.lr = 0.01;
  c.max_iterations = 2000;
  c.primal_dual.alpha = 1e3;  // on the scale of 1 / epsilon
  c.primal_dual.lambda0 = 10.0;
  const auto report = train_sparse_primal_dual(*model, data, c, model->parameters().values());
  ASSERT_TRUE(report.converged) << report.message;
  for (double l : report.lambda) EXPECT_GE(l, 0.0);

  const double eps = default_epsilon(data);
  const auto sims = simulate_like(*model, data, c, report.w);
  EXPECT_LE(loss_mse(data, sims), 1.1 * eps);

  // Mean |flow| of the spring link over the training data.
  const auto& names = model->link_names();
  const auto it = std::find(names.begin(), names.end(), "k:0");
  ASSERT_NE(it, names.end());
  const Index link = it - names.begin();
  double mean_flow = 0.0;
  for (const auto& s : sims) {
    Matrix flows(s.size(), names.size());
    for (Index k = 0; k < s.size(); ++k) {
      Vector value;
      model->channel(Channel::LinkFlow, s.times[k], s.states.row(k).transpose(),
                     s.inputs.row(k).transpose(), report.w, value, nullptr, nullptr);
      flows.row(k) = value.transpose();
    }
    mean_flow += reg_sparsity(flows.col(link), s.times) / static_cast<double>(sims.size());
  }
  EXPECT_LT(mean_flow, 1e-3);
}
