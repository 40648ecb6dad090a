#pragma once

#include "phlearn/core.hpp"
#include "phlearn/maps.hpp"
#include "phlearn/ode_system.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace phl {

/// Boundary signal driving a source construct.
struct Signal {
  enum class Kind { Input, Constant, Step, Sine, Feedback };
  Kind kind = Kind::Input;
  double value = 0.0;      // Constant
  double time = 0.0;       // Step: switching time
  double before = 0.0;     // Step
  double after = 1.0;      // Step
  double amplitude = 1.0;  // Sine
  double frequency = 1.0;  // Sine, Hz
  double phase = 0.0;      // Sine
  Vector gain;             // Feedback: u = gain . x in canonical state order

  static Signal input() { return {}; }
  static Signal constant(double v) {
    Signal s;
    s.kind = Kind::Constant;
    s.value = v;
    return s;
  }
  static Signal sine(double amplitude, double frequency, double phase = 0.0) {
    Signal s;
    s.kind = Kind::Sine;
    s.amplitude = amplitude;
    s.frequency = frequency;
    s.phase = phase;
    return s;
  }
  static Signal step(double time, double before, double after) {
    Signal s;
    s.kind = Kind::Step;
    s.time = time;
    s.before = before;
    s.after = after;
    return s;
  }
};

// Construct variants. Every port is scalar.

/// xdot = f, e = dH/dx
struct FlowStore {
  EnergyMap energy;
};
/// xdot = e, f = dH/dx
struct EffortStore {
  EnergyMap energy;
};
enum class Causality {
  Admittance,  // f = R(e)
  Impedance,   // e = R(f)
};
struct Resistive {
  ResistiveMap map;
  Causality causality = Causality::Admittance;
};
/// e1 = n e2, f2 = n f1 (power conserving)
struct Transformer {
  ModulusMap modulus;
};
/// e1 = r f2, e2 = r f1 (power conserving)
struct Gyrator {
  ModulusMap modulus;
};
/// Explicit solution of a nonlinear two-port: (f1, f2) = h(e1, e2).
/// Both ports deliver their flow into the attached junctions.
struct TransformerSolution {
  Mlp map;
};
struct FlowSource {
  Signal signal;
};
struct EffortSource {
  Signal signal;
};

using ConstructVariant = std::variant<FlowStore, EffortStore, Resistive, Transformer, Gyrator,
                                      TransformerSolution, FlowSource, EffortSource>;

struct Construct {
  std::string id;
  ConstructVariant variant;

  Index port_count() const;
  Index state_dim() const;
  Index param_count() const;
  bool is_source() const;
  /// +1 when power e*f at the port flows into the construct, -1 when out.
  int orientation(Index port) const;
  Vector initial_params(std::mt19937_64& rng) const;
};

enum class JunctionKind {
  CommonEffort,  // shared effort, sum of signed flows is zero
  CommonFlow,    // shared flow, sum of signed efforts is zero
};

/// Junction port. `node` names a construct (with `port` index) or another
/// junction, in which case the two junctions are joined by a bond.
struct PortRef {
  std::string node;
  Index port = 0;
  int sign = 1;
};

struct Junction {
  std::string id;
  JunctionKind kind = JunctionKind::CommonEffort;
  std::vector<PortRef> ports;
};

struct Observed {
  enum class Kind { State, Effort, Flow };
  Kind kind = Kind::State;
  std::string construct;
};

struct Network {
  std::vector<Construct> constructs;
  std::vector<Junction> junctions;
  std::vector<Observed> observed;
  /// Raw parameter values keyed by construct id. Constructs without an entry
  /// are initialized from their maps.
  ParamVector params;

  const Construct* find(const std::string& id) const;
  const Junction* find_junction(const std::string& id) const;
  std::vector<std::string> boundary() const;

  /// Builds `params` for every trainable construct in canonical order,
  /// keeping existing slices.
  void init_params(std::uint64_t seed = 0);
};

class NetworkSystem;

/// Assembles a loop-free network into explicit dynamics. Throws
/// StructuralError on dangling ports, causality conflicts and algebraic loops.
std::shared_ptr<const NetworkSystem> assemble_ode(const Network& net);

/// Sum of absolute junction residuals plus the absolute total port power,
/// with port powers oriented by each construct's own convention.
double check_dirac(const Network& net, const Vector& state, const Vector& inputs,
                   const Vector& w, double t = 0.0);

/// Port values for every construct port, in Network::constructs order.
struct PortValues {
  std::string construct;
  Index port = 0;
  double effort = 0.0;
  double flow = 0.0;
};

class NetworkSystem final : public OdeSystem {
 public:
  explicit NetworkSystem(const Network& net);

  using OdeSystem::rhs;

  Index state_dim() const override { return static_cast<Index>(stores_.size()); }
  Index input_dim() const override { return n_inputs_; }
  std::vector<std::string> state_names() const override;

  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override;
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override;
  Index channel_dim(Channel c) const override;
  void channel(Channel c, double t, const Vector& x, const Vector& u, const Vector& w,
               Vector& value, Matrix* dx, Matrix* dw) const override;

  std::vector<PortValues> port_values(double t, const Vector& x, const Vector& u,
                                      const Vector& w) const;
  double dirac_residual(double t, const Vector& x, const Vector& u, const Vector& w) const;

  /// Total stored energy sum_i H_i(x_i).
  double stored_energy(const Vector& x, const Vector& w) const;

  /// Names of the link-flow channel entries ("<construct>:<port>").
  const std::vector<std::string>& link_names() const { return link_names_; }
  const std::vector<std::string>& element_names() const { return element_names_; }
  const Network& network() const { return net_; }

  /// Generic evaluation of every network variable.
  template <typename Scalar>
  void evaluate(double t, const VectorX<Scalar>& x, const VectorX<Scalar>& u,
                const VectorX<Scalar>& w, std::vector<Scalar>& vars) const;

 private:
  struct PortVars {
    Index construct;  // index into net_.constructs
    Index port;
    Index e;  // variable ids
    Index f;
  };
  struct Step;  // one scheduled assignment

  template <typename Scalar>
  void gather(Channel c, const VectorX<Scalar>& x, const std::vector<Scalar>& vars,
              VectorX<Scalar>& out) const;
  template <typename Scalar>
  void gather_rhs(const std::vector<Scalar>& vars, VectorX<Scalar>& out) const;

  void differentiate(Channel* c, double t, const Vector& x, const Vector& u, const Vector& w,
                     Vector& value, Matrix* dx, Matrix* dw) const;

  Network net_;
  std::vector<Index> order_;          // constructs sorted by id
  std::vector<Index> stores_;         // construct indices in canonical state order
  std::vector<Index> state_of_;       // construct index -> state slot or -1
  std::vector<Index> param_offset_;   // construct index -> offset in w or -1
  std::vector<Index> input_of_;       // construct index -> input slot or -1
  Index n_inputs_ = 0;
  std::vector<PortVars> ports_;
  std::vector<std::pair<Index, Index>> port_index_;  // construct -> [begin, end) into ports_
  Index n_vars_ = 0;
  std::vector<std::shared_ptr<const Step>> schedule_;

  struct Balance {
    std::vector<std::pair<Index, int>> terms;  // variable, sign
  };
  std::vector<Balance> balances_;
  struct BondInfo {
    Index e, f;
    int sign_a, sign_b;
  };
  std::vector<BondInfo> bonds_;
  std::vector<Index> links_;     // variable ids of link flows
  std::vector<std::string> link_names_;
  std::vector<Index> elements_;  // resistive construct indices
  std::vector<std::string> element_names_;

  friend std::shared_ptr<const NetworkSystem> assemble_ode(const Network& net);
};

}  // namespace phl
