#include "phlearn/network.hpp"
#include "phlearn/odesolve.hpp"
#include "phlearn/reference.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace phl;

namespace {

Vector random_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Vector::NullaryExpr(n, [&] { return d(rng); });
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Assemble, MsdMatchesCanonicalOde) {
  auto sys = assemble_ode(build_msd_network({1.0, 1.0, 1.0}));
  ASSERT_EQ(sys->state_dim(), 2);
  EXPECT_EQ(sys->state_names(), (std::vector<std::string>{"k", "m"}));
  const Vector f = sys->rhs(0.0, vec({1.0, 0.0}), Vector(), sys->parameters().values());
  EXPECT_NEAR(f(0), 0.0, 1e-15);
  EXPECT_NEAR(f(1), -1.0, 1e-15);
}

TEST(Assemble, MsdGeneralParameters) {
  MsdSpec spec{2.0, 3.0, 0.5, Signal::constant(1.5)};
  auto sys = assemble_ode(build_msd_network(spec));
  const double q = 0.4, p = -1.2;
  const Vector f = sys->rhs(0.0, vec({q, p}), Vector(), sys->parameters().values());
  EXPECT_NEAR(f(0), p / 2.0, 1e-14);
  EXPECT_NEAR(f(1), 1.5 - 3.0 * q - 0.5 * p / 2.0, 1e-14);
}

TEST(Assemble, RlcEquilibrium) {
  auto sys = assemble_ode(build_rlc_network());
  const Vector f = sys->rhs(0.0, Vector::Zero(2), Vector(), sys->parameters().values());
  EXPECT_TRUE(f.isZero());
  // C stores charge (qdot = current = flux / L), L stores flux.
  const Vector g = sys->rhs(0.0, vec({1.0, 2.0}), Vector(), sys->parameters().values());
  EXPECT_NEAR(g(0), 2.0, 1e-15);
  EXPECT_NEAR(g(1), -1.0 - 2.0, 1e-15);
}

TEST(Assemble, StateOrderIsLexicographic) {
  Network net = build_msd_network();
  std::reverse(net.constructs.begin(), net.constructs.end());
  auto sys = assemble_ode(net);
  EXPECT_EQ(sys->state_names(), (std::vector<std::string>{"k", "m"}));
}

TEST(Assemble, LayeredStateCounts) {
  for (int n = 1; n <= 3; ++n) {
    auto sys = assemble_ode(build_layered_network({n}));
    EXPECT_EQ(sys->state_dim(), 3 * n);
  }
  auto one = assemble_ode(build_layered_network({1}));
  EXPECT_EQ(one->state_names(), (std::vector<std::string>{"L1_k1", "L1_k2", "L1_m2"}));
  EXPECT_EQ(one->network().constructs.size(), 6u);
  EXPECT_THROW(build_layered_network({0}), StructuralError);
}

TEST(Assemble, LayeredHandDerivation) {
  LayeredSpec spec;
  spec.drive = Signal::constant(0.3);
  auto sys = assemble_ode(build_layered_network(spec));
  const Vector x = vec({0.2, -0.1, 0.5});  // k1 elongation, k2 elongation, m2 momentum
  const Vector f = sys->rhs(0.0, x, Vector(), sys->parameters().values());
  const double v = x(2) / spec.m2;
  const double rel = 0.3 - v;
  const double pair = spec.k1 * x(0) + spec.d1 * rel;
  EXPECT_NEAR(f(0), rel, 1e-14);
  EXPECT_NEAR(f(1), v, 1e-14);
  EXPECT_NEAR(f(2), pair - spec.k2 * x(1) - spec.d2 * v, 1e-14);
}

TEST(Dirac, ResidualVanishesOnReferenceNetworks) {
  std::mt19937_64 rng(1);
  std::vector<Network> nets = {build_msd_network({1.3, 0.7, 0.4, Signal::sine(2.0, 0.5)}),
                               build_rlc_network({0.5, 2.0, 0.3, true, Signal::constant(1.0)}),
                               build_layered_network({2, Signal::sine(1.0, 1.0)})};
  for (const auto& net : nets) {
    auto sys = assemble_ode(net);
    for (int i = 0; i < 20; ++i) {
      const Vector x = random_vector(rng, sys->state_dim(), 5.0);
      EXPECT_LE(check_dirac(net, x, Vector(), sys->parameters().values(), 0.37), 1e-10);
    }
  }
}

TEST(Dirac, FlippedSignIsDetected) {
  Network net = build_msd_network({1.0, 1.0, 1.0});
  net.junctions[0].ports[2].sign = -1;  // damper
  auto sys = assemble_ode(net);
  EXPECT_GT(check_dirac(net, vec({0.0, 1.0}), Vector(), sys->parameters().values()), 1e-3);
}

TEST(Structure, DanglingPortIsRejected) {
  Network net = build_msd_network();
  net.junctions[0].ports.pop_back();
  EXPECT_THROW(assemble_ode(net), StructuralError);
  EXPECT_THROW(check_dirac(net, Vector::Zero(2), Vector(), Vector()), StructuralError);
}

TEST(Structure, DoubleAttachmentIsRejected) {
  Network net = build_msd_network();
  net.junctions[0].ports.push_back({"d", 0, 1});
  EXPECT_THROW(assemble_ode(net), StructuralError);
}

TEST(Structure, UnknownNodeIsRejected) {
  Network net = build_msd_network();
  net.junctions[0].ports.push_back({"nope", 0, 1});
  EXPECT_THROW(assemble_ode(net), StructuralError);
}

TEST(Structure, AlgebraicLoopIsNamed) {
  // Two dampers sharing a flow with an effort source: each needs the other's
  // effort on a common-flow junction fed by a flow store... build a genuine
  // loop: resistor in admittance form on a common-flow junction with only
  // resistors and a flow source forces e_R1 + e_R2 = 0 with unknown e's.
  Network net;
  net.constructs = {{"R1", Resistive{ResistiveMap{LinearResistance{1.0, false}}}},
                    {"R2", Resistive{ResistiveMap{LinearResistance{2.0, false}}}},
                    {"C", FlowStore{EnergyMap{QuadraticEnergy{1.0, false}}}}};
  net.junctions = {{"J", JunctionKind::CommonFlow, {{"R1", 0, 1}, {"R2", 0, 1}, {"C", 0, 1}}}};
  try {
    assemble_ode(net);
    FAIL() << "expected an algebraic loop";
  } catch (const StructuralError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("algebraic loop"), std::string::npos) << msg;
    EXPECT_NE(msg.find("R1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("R2"), std::string::npos) << msg;
  }
}

TEST(Structure, CausalityConflictIsRejected) {
  // Two flow stores on one common-effort junction both define the effort.
  Network net;
  net.constructs = {{"m1", FlowStore{EnergyMap{QuadraticEnergy{1.0, false}}}},
                    {"m2", FlowStore{EnergyMap{QuadraticEnergy{1.0, false}}}}};
  net.junctions = {{"J", JunctionKind::CommonEffort, {{"m1", 0, 1}, {"m2", 0, 1}}}};
  EXPECT_THROW(assemble_ode(net), StructuralError);
}

TEST(Partials, AssembledSystemsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::vector<Network> nets = {build_msd_network({1.0, 2.0, 0.3, Signal::input(), true}),
                               build_layered_network({2, Signal::sine(1.0, 1.0), 1.0, 0.5, 1.0,
                                                      1.0, 0.5, true}),
                               build_sparse_toy_network({0.5, 0.2})};
  for (const auto& net : nets) {
    auto sys = assemble_ode(net);
    ASSERT_GT(sys->param_dim(), 0);
    for (int i = 0; i < 50; ++i) {
      const Vector x = random_vector(rng, sys->state_dim(), 2.0);
      const Vector w = random_vector(rng, sys->param_dim(), 1.5);
      const Vector u = random_vector(rng, sys->input_dim());
      const auto err = test::rhs_partial_errors(*sys, 0.2, x, u, w);
      EXPECT_LE(err.dx, 1e-5) << sys->state_names()[0];
      EXPECT_LE(err.dw, 1e-5) << sys->state_names()[0];
    }
  }
}

TEST(Channels, LinkFlows) {
  auto rest = assemble_ode(build_layered_network({2}));
  Vector flows;
  rest->channel(Channel::LinkFlow, 0.0, Vector::Zero(6), Vector(), rest->parameters().values(),
                flows, nullptr, nullptr);
  EXPECT_TRUE(flows.isZero());

  auto msd = assemble_ode(build_msd_network({1.0, 1.0, 0.0}));
  msd->channel(Channel::LinkFlow, 0.0, vec({1.0, 0.0}), Vector(), msd->parameters().values(),
               flows, nullptr, nullptr);
  const auto& names = msd->link_names();
  const auto k = std::find(names.begin(), names.end(), "k:0") - names.begin();
  EXPECT_DOUBLE_EQ(flows(k), 1.0);
}

TEST(Channels, ZeroedLayerCarriesNoFlow) {
  LayeredSpec spec{2, Signal::constant(0.0)};
  spec.trainable = true;
  auto sys = assemble_ode(build_layered_network(spec));
  Vector w = sys->parameters().values();
  for (const auto& s : sys->parameters().slices()) {
    if (s.name.rfind("L2_", 0) == 0) w.segment(s.offset, s.size).setZero();
  }
  std::mt19937_64 rng(4);
  Vector x = random_vector(rng, 6);
  x.tail(3).setZero();  // layer 2 at rest
  Vector flows;
  sys->channel(Channel::LinkFlow, 0.0, x, Vector(), w, flows, nullptr, nullptr);
  const auto& names = sys->link_names();
  for (Index i = 0; i < flows.size(); ++i) {
    if (names[i].rfind("L2_", 0) == 0) {
      EXPECT_EQ(flows(i), 0.0) << names[i];
    }
  }
}

TEST(Channels, PartialsMatchFiniteDifferences) {
  auto sys = assemble_ode(build_layered_network({2, Signal::constant(0.2), 1, 0.5, 1, 1, 0.5, true}));
  std::mt19937_64 rng(8);
  const Vector x = random_vector(rng, 6);
  const Vector w = random_vector(rng, sys->param_dim(), 1.5);
  for (Channel c : {Channel::Output, Channel::LinkFlow, Channel::ElementPower}) {
    Vector v;
    Matrix dx, dw;
    sys->channel(c, 0.0, x, Vector(), w, v, &dx, &dw);
    Matrix fdx(v.size(), 6), fdw(v.size(), w.size());
    const double h = 1e-6;
    for (Index j = 0; j < 6; ++j) {
      Vector p = x, m = x, vp, vm;
      p(j) += h;
      m(j) -= h;
      sys->channel(c, 0.0, p, Vector(), w, vp, nullptr, nullptr);
      sys->channel(c, 0.0, m, Vector(), w, vm, nullptr, nullptr);
      fdx.col(j) = (vp - vm) / (2 * h);
    }
    for (Index j = 0; j < w.size(); ++j) {
      Vector p = w, m = w, vp, vm;
      p(j) += h;
      m(j) -= h;
      sys->channel(c, 0.0, x, Vector(), p, vp, nullptr, nullptr);
      sys->channel(c, 0.0, x, Vector(), m, vm, nullptr, nullptr);
      fdw.col(j) = (vp - vm) / (2 * h);
    }
    EXPECT_LE(test::rel_error(dx, fdx), 1e-5);
    EXPECT_LE(test::rel_error(dw, fdw), 1e-5);
  }
}

TEST(Energy, PowerBalanceAlongTrajectory) {
  // dH/dt = -resistive power + source power, checked with midpoint to O(h^2).
  MsdSpec spec{1.0, 2.0, 0.3, Signal::sine(1.0, 0.5)};
  Network net = build_msd_network(spec);
  auto sys = assemble_ode(net);
  const Vector w = sys->parameters().values();
  const double h = 0.001;
  auto traj = integrate(*sys, vec({0.5, 0.0}), InputSignal::none(), 2.0, h, Method::Midpoint);
  double worst = 0.0;
  for (Index k = 0; k + 1 < traj.size(); ++k) {
    const double tm = traj.times[k] + h / 2;
    const Vector xm = 0.5 * (traj.states.row(k) + traj.states.row(k + 1)).transpose();
    double supplied = 0.0, dissipated = 0.0;
    for (const auto& pv : sys->port_values(tm, xm, Vector(), w)) {
      if (pv.construct == "d") dissipated += pv.effort * pv.flow;
      if (pv.construct == "F") supplied += pv.effort * pv.flow;
    }
    const double dh = (sys->stored_energy(traj.states.row(k + 1).transpose(), w) -
                       sys->stored_energy(traj.states.row(k).transpose(), w)) / h;
    worst = std::max(worst, std::abs(dh - (supplied - dissipated)));
  }
  EXPECT_LE(worst, 10 * h * h);
}

TEST(Energy, UnforcedNetworksDissipate) {
  const double h = 0.01;
  std::vector<Network> nets = {build_msd_network({1.0, 1.0, 0.2}), build_layered_network({2})};
  std::mt19937_64 rng(9);
  for (const auto& net : nets) {
    auto sys = assemble_ode(net);
    const Vector w = sys->parameters().values();
    auto traj = integrate(*sys, random_vector(rng, sys->state_dim(), 2.0), InputSignal::none(),
                          10.0, h, Method::Midpoint);
    for (Index k = 0; k + 1 < traj.size(); ++k) {
      const double h0 = sys->stored_energy(traj.states.row(k).transpose(), w);
      const double h1 = sys->stored_energy(traj.states.row(k + 1).transpose(), w);
      EXPECT_LE(h1, h0 + 10 * h * h);
    }
  }
}
