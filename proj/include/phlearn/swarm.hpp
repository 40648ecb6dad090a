#pragma once

#include "phlearn/mlp.hpp"
#include "phlearn/network.hpp"
#include "phlearn/odesolve.hpp"

#include <cstdint>
#include <vector>

namespace phl {

struct CsParams {
  double gamma = 0.15;
  double c_a = 200.0;
  double l_a = 100.0;
  double c_r = 500.0;
  double l_r = 2.0;

  void validate() const;
};

/// G(r) = (1 + r^2)^-gamma
double cs_interaction(double r, const CsParams& p = {});
/// U(r) = -C_A exp(-r/l_A) + C_R exp(-r/l_R)
double cs_potential(double r, const CsParams& p = {});
/// U'(r)
double cs_potential_grad(double r, const CsParams& p = {});
/// Root of U' by bisection.
double cs_equilibrium_spacing(const CsParams& p = {});

/// Swarm state layout: positions x_1..x_N (d each), then velocities v_1..v_N.
struct SwarmLayout {
  Index n = 2;  // particles
  Index d = 1;  // spatial dimension
  Index state_dim() const { return 2 * n * d; }
};

/// Cucker-Smale dynamics with potential. `alignment` = false drops the G
/// term. The potential gradient between coincident particles is 0.
Vector cs_rhs(const Vector& state, const SwarmLayout& layout, const CsParams& p = {},
              bool alignment = true);

class CsSystem final : public OdeSystem {
 public:
  CsSystem(SwarmLayout layout, CsParams p = {}, bool alignment = true);
  using OdeSystem::rhs;
  Index state_dim() const override { return layout_.state_dim(); }
  std::vector<std::string> state_names() const override;
  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override;
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override;

 private:
  SwarmLayout layout_;
  CsParams p_;
  bool alignment_;
};

struct SwarmDataSpec {
  SwarmLayout layout{10, 1};
  CsParams params;
  int n_series = 5;
  double t_end = 10.0;
  double h = 0.1;
  double ic_low = -10.0;
  double ic_high = 10.0;
  int substeps = 10;  // RK4 substeps per sample
};

/// Uniform random positions and velocities in [ic_low, ic_high].
std::vector<Vector> swarm_random_ics(const SwarmDataSpec& spec, int count, std::uint64_t seed);
std::vector<Trajectory> generate_swarm_data(const SwarmDataSpec& spec, std::uint64_t seed);
std::vector<Trajectory> generate_swarm_data(const SwarmDataSpec& spec,
                                            const std::vector<Vector>& ics);

/// Learned interaction model
///   qdot_i = p_i,  pdot_i = (1/N) sum_j F(p_j - p_i, q_j - q_i; beta),
/// with F one shared 2d-hidden-d tanh network (slice "interaction"). The
/// self pair contributes F(0, 0).
class SwarmModel final : public OdeSystem {
 public:
  SwarmModel(SwarmLayout layout, Index hidden = 100, std::uint64_t seed = 0);
  using OdeSystem::rhs;
  Index state_dim() const override { return layout_.state_dim(); }
  std::vector<std::string> state_names() const override;
  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override;
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override;

  const Mlp& interaction() const { return net_; }
  const SwarmLayout& layout() const { return layout_; }
  /// F(dp, dq) for one pair.
  Vector force(const Vector& dp, const Vector& dq, const Vector& w) const;

 private:
  SwarmLayout layout_;
  Mlp net_;
};

/// 1D mass-spring-damper network equivalent to the CS model: unit masses
/// "m<i>" joined pairwise through a spring "s<i><j>" (energy U(|q|)/N) and
/// an alignment damper "d<i><j>" (G(|q|)/N, modulated by the spring).
/// State order: momenta m_i, then elongations s_ij = x_i - x_j (i < j).
Network build_msd_equivalent_cs(Index n, const CsParams& p = {});

struct PotentialCurve {
  std::vector<double> q;
  std::vector<double> learned;    // F(0, q)
  std::vector<double> reference;  // U'(|q|) sign(q)
};

/// q in [-10, 10] step 0.1 by default (201 points). 1D models only.
PotentialCurve recover_potential_curve(const SwarmModel& model, const Vector& w,
                                       const CsParams& p = {}, double q_min = -10.0,
                                       double q_max = 10.0, double dq = 0.1);

}  // namespace phl
