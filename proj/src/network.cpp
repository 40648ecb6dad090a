#include "phlearn/network.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace phl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using AD = Eigen::AutoDiffScalar<Vector>;

// Constants entering automatic differentiation carry an explicit zero
// derivative; mixing empty derivative vectors into expressions is unsafe.
template <typename Scalar>
struct Lift {
  static Index width(const VectorX<Scalar>&, const VectorX<Scalar>&) { return 0; }
  static Scalar constant(double v, Index) { return Scalar(v); }
};
template <>
struct Lift<AD> {
  static Index width(const VectorX<AD>& x, const VectorX<AD>& w) {
    if (x.size()) return x(0).derivatives().size();
    if (w.size()) return w(0).derivatives().size();
    return 0;
  }
  static AD constant(double v, Index nd) { return AD(v, Vector::Zero(nd)); }
};

template <typename Scalar>
Scalar signal_value(const Signal& s, double t, const VectorX<Scalar>& x,
                    const VectorX<Scalar>& u, Index input_slot, Index nd) {
  auto c = [nd](double v) { return Lift<Scalar>::constant(v, nd); };
  switch (s.kind) {
    case Signal::Kind::Input:
      return u(input_slot);
    case Signal::Kind::Constant:
      return c(s.value);
    case Signal::Kind::Step:
      return c(t < s.time ? s.before : s.after);
    case Signal::Kind::Sine:
      return c(s.amplitude * std::sin(2.0 * M_PI * s.frequency * t + s.phase));
    case Signal::Kind::Feedback: {
      require_dim(s.gain.size(), x.size(), "feedback gain");
      Scalar acc = c(0.0);
      for (Index i = 0; i < x.size(); ++i) acc += s.gain(i) * x(i);
      return acc;
    }
  }
  return c(0.0);
}

const EnergyMap* energy_of(const Construct& c) {
  if (auto* s = std::get_if<FlowStore>(&c.variant)) return &s->energy;
  if (auto* s = std::get_if<EffortStore>(&c.variant)) return &s->energy;
  return nullptr;
}

class UnionFind {
 public:
  Index add() {
    parent_.push_back(static_cast<Index>(parent_.size()));
    return parent_.back();
  }
  Index find(Index a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }
  Index size() const { return static_cast<Index>(parent_.size()); }

 private:
  std::vector<Index> parent_;
};

inline void settle(double&, Index) {}
inline void settle(AD& v, Index nd) {
  if (v.derivatives().size() == 0) v.derivatives() = Vector::Zero(nd);
}

}  // namespace

// ---------------------------------------------------------------------------
// Construct
// ---------------------------------------------------------------------------

Index Construct::port_count() const {
  return std::visit(overloaded{[](const Transformer&) -> Index { return 2; },
                               [](const Gyrator&) -> Index { return 2; },
                               [](const TransformerSolution&) -> Index { return 2; },
                               [](const auto&) -> Index { return 1; }},
                    variant);
}

Index Construct::state_dim() const {
  const EnergyMap* e = energy_of(*this);
  return e ? e->dim : 0;
}

Index Construct::param_count() const {
  return std::visit(
      overloaded{[](const FlowStore& s) { return s.energy.param_count(); },
                 [](const EffortStore& s) { return s.energy.param_count(); },
                 [](const Resistive& r) { return r.map.param_count(); },
                 [](const Transformer& t) { return t.modulus.param_count(); },
                 [](const Gyrator& g) { return g.modulus.param_count(); },
                 [](const TransformerSolution& s) { return s.map.param_count(); },
                 [](const auto&) -> Index { return 0; }},
      variant);
}

bool Construct::is_source() const {
  return std::holds_alternative<FlowSource>(variant) ||
         std::holds_alternative<EffortSource>(variant);
}

int Construct::orientation(Index port) const {
  return std::visit(overloaded{[&](const Transformer&) { return port == 0 ? 1 : -1; },
                               [&](const Gyrator&) { return port == 0 ? 1 : -1; },
                               [](const TransformerSolution&) { return -1; },
                               [](const FlowSource&) { return -1; },
                               [](const EffortSource&) { return -1; },
                               [](const auto&) { return 1; }},
                    variant);
}

Vector Construct::initial_params(std::mt19937_64& rng) const {
  return std::visit(
      overloaded{[&](const FlowStore& s) { return s.energy.initial_params(rng); },
                 [&](const EffortStore& s) { return s.energy.initial_params(rng); },
                 [&](const Resistive& r) { return r.map.initial_params(rng); },
                 [](const Transformer& t) -> Vector {
                   return t.modulus.trainable ? Vector::Constant(1, t.modulus.value) : Vector();
                 },
                 [](const Gyrator& g) -> Vector {
                   return g.modulus.trainable ? Vector::Constant(1, g.modulus.value) : Vector();
                 },
                 [&](const TransformerSolution& s) { return s.map.initial_params(rng); },
                 [](const auto&) { return Vector(); }},
      variant);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

const Construct* Network::find(const std::string& id) const {
  for (const auto& c : constructs) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const Junction* Network::find_junction(const std::string& id) const {
  for (const auto& j : junctions) {
    if (j.id == id) return &j;
  }
  return nullptr;
}

std::vector<std::string> Network::boundary() const {
  std::vector<std::string> ids;
  for (const auto& c : constructs) {
    if (c.is_source()) ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void Network::init_params(std::uint64_t seed) {
  std::vector<const Construct*> sorted;
  for (const auto& c : constructs) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const Construct* a, const Construct* b) { return a->id < b->id; });
  std::mt19937_64 rng(seed);
  ParamVector rebuilt;
  for (const Construct* c : sorted) {
    const Index n = c->param_count();
    if (n == 0) continue;
    Vector init = c->initial_params(rng);
    if (auto existing = params.find(c->id)) {
      if (existing->size != n) {
        throw StructuralError("parameter slice '" + c->id + "' has size " +
                              std::to_string(existing->size) + ", expected " + std::to_string(n));
      }
      init = params.read(c->id);
    }
    rebuilt.append(c->id, init);
  }
  params = std::move(rebuilt);
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

struct NetworkSystem::Step {
  enum class Op { Store, Source, Resist, Mul, Div, Solution, Balance };
  Op op;
  Index construct = -1;
  Index out = -1;
  Index out2 = -1;
  Index in = -1;
  Index in2 = -1;
  Index balance = -1;
  Index term = -1;
};

NetworkSystem::NetworkSystem(const Network& net) : net_(net) {
  const Index nc = static_cast<Index>(net_.constructs.size());

  // Identifiers and per-construct checks.
  std::map<std::string, Index> construct_index;
  for (Index i = 0; i < nc; ++i) {
    const auto& c = net_.constructs[i];
    if (!construct_index.emplace(c.id, i).second) {
      throw StructuralError("duplicate construct id '" + c.id + "'");
    }
    if (const EnergyMap* e = energy_of(c); e && e->dim != 1) {
      throw StructuralError("construct '" + c.id + "': network ports are scalar");
    }
    if (auto* r = std::get_if<Resistive>(&c.variant)) {
      if (r->map.dim != 1) throw StructuralError("construct '" + c.id + "': network ports are scalar");
    }
    if (auto* s = std::get_if<TransformerSolution>(&c.variant)) {
      if (s->map.input_dim() != 2 || s->map.output_dim() != 2) {
        throw StructuralError("construct '" + c.id + "': solution map must be 2 -> 2");
      }
    }
  }
  std::map<std::string, Index> junction_index;
  for (Index j = 0; j < static_cast<Index>(net_.junctions.size()); ++j) {
    const auto& id = net_.junctions[j].id;
    if (construct_index.count(id) || !junction_index.emplace(id, j).second) {
      throw StructuralError("duplicate id '" + id + "'");
    }
  }

  order_.resize(nc);
  std::iota(order_.begin(), order_.end(), 0);
  std::sort(order_.begin(), order_.end(), [&](Index a, Index b) {
    return net_.constructs[a].id < net_.constructs[b].id;
  });

  net_.init_params();
  params_ = net_.params;
  param_offset_.assign(nc, -1);
  state_of_.assign(nc, -1);
  input_of_.assign(nc, -1);
  for (Index i : order_) {
    const auto& c = net_.constructs[i];
    if (c.param_count() > 0) param_offset_[i] = params_.slice(c.id).offset;
    if (c.state_dim() > 0) {
      state_of_[i] = static_cast<Index>(stores_.size());
      stores_.push_back(i);
    }
    if (c.is_source()) {
      const Signal& s = std::visit(
          overloaded{[](const FlowSource& f) -> const Signal& { return f.signal; },
                     [](const EffortSource& f) -> const Signal& { return f.signal; },
                     [](const auto&) -> const Signal& { throw StructuralError("not a source"); }},
          c.variant);
      if (s.kind == Signal::Kind::Input) input_of_[i] = n_inputs_++;
    }
  }

  // Raw port variables, then unions from junctions and bonds.
  UnionFind uf;
  port_index_.assign(nc, {0, 0});
  std::vector<std::pair<Index, Index>> raw_ports;  // (e, f) per construct port
  for (Index i = 0; i < nc; ++i) {
    port_index_[i].first = static_cast<Index>(raw_ports.size());
    for (Index p = 0; p < net_.constructs[i].port_count(); ++p) {
      const Index e = uf.add();
      const Index f = uf.add();
      raw_ports.emplace_back(e, f);
    }
    port_index_[i].second = static_cast<Index>(raw_ports.size());
  }

  std::vector<int> attached(raw_ports.size(), 0);
  std::map<std::pair<Index, Index>, std::pair<Index, Index>> bond_vars;  // (lo, hi) -> (e, f)
  std::map<std::pair<Index, Index>, std::pair<int, int>> bond_signs;
  std::vector<std::vector<std::tuple<Index, Index, int>>> entries(net_.junctions.size());

  for (Index j = 0; j < static_cast<Index>(net_.junctions.size()); ++j) {
    const auto& junction = net_.junctions[j];
    for (const auto& ref : junction.ports) {
      if (ref.sign != 1 && ref.sign != -1) {
        throw StructuralError("junction '" + junction.id + "': port sign must be +1 or -1");
      }
      if (auto it = construct_index.find(ref.node); it != construct_index.end()) {
        const Index ci = it->second;
        const Index np = net_.constructs[ci].port_count();
        if (ref.port < 0 || ref.port >= np) {
          throw StructuralError("junction '" + junction.id + "': construct '" + ref.node +
                                "' has no port " + std::to_string(ref.port));
        }
        const Index rp = port_index_[ci].first + ref.port;
        ++attached[rp];
        entries[j].emplace_back(raw_ports[rp].first, raw_ports[rp].second, ref.sign);
      } else if (auto jt = junction_index.find(ref.node); jt != junction_index.end()) {
        const Index other = jt->second;
        if (other == j) throw StructuralError("junction '" + junction.id + "' bonded to itself");
        const auto key = std::minmax(j, other);
        auto [pos, fresh] = bond_vars.try_emplace(key, std::pair<Index, Index>{-1, -1});
        if (fresh) pos->second = {uf.add(), uf.add()};
        auto& signs = bond_signs[key];
        int& slot = (j == key.first) ? signs.first : signs.second;
        if (slot != 0) {
          throw StructuralError("junctions '" + junction.id + "' and '" + ref.node +
                                "' are bonded more than once");
        }
        slot = ref.sign;
        entries[j].emplace_back(pos->second.first, pos->second.second, ref.sign);
      } else {
        throw StructuralError("junction '" + junction.id + "' references unknown node '" +
                              ref.node + "'");
      }
    }
  }
  for (Index i = 0; i < nc; ++i) {
    for (Index p = port_index_[i].first; p < port_index_[i].second; ++p) {
      if (attached[p] != 1) {
        throw StructuralError("port " + std::to_string(p - port_index_[i].first) +
                              " of construct '" + net_.constructs[i].id + "' is attached to " +
                              std::to_string(attached[p]) + " junctions (expected exactly 1)");
      }
    }
  }
  for (const auto& [key, signs] : bond_signs) {
    if (signs.first == 0 || signs.second == 0) {
      throw StructuralError("bond between '" + net_.junctions[key.first].id + "' and '" +
                            net_.junctions[key.second].id + "' is listed on one side only");
    }
  }

  for (Index j = 0; j < static_cast<Index>(net_.junctions.size()); ++j) {
    const auto& list = entries[j];
    for (std::size_t k = 1; k < list.size(); ++k) {
      if (net_.junctions[j].kind == JunctionKind::CommonEffort) {
        uf.unite(std::get<0>(list[0]), std::get<0>(list[k]));
      } else {
        uf.unite(std::get<1>(list[0]), std::get<1>(list[k]));
      }
    }
  }

  // Compress variable ids.
  std::map<Index, Index> compact;
  auto id_of = [&](Index raw) {
    const Index root = uf.find(raw);
    auto [it, fresh] = compact.try_emplace(root, static_cast<Index>(compact.size()));
    return it->second;
  };
  for (Index i = 0; i < nc; ++i) {
    for (Index p = port_index_[i].first; p < port_index_[i].second; ++p) {
      ports_.push_back({i, p - port_index_[i].first, id_of(raw_ports[p].first),
                        id_of(raw_ports[p].second)});
    }
  }
  for (const auto& [key, vars] : bond_vars) {
    const auto& signs = bond_signs[key];
    bonds_.push_back({id_of(vars.first), id_of(vars.second), signs.first, signs.second});
  }
  for (Index j = 0; j < static_cast<Index>(net_.junctions.size()); ++j) {
    Balance b;
    for (const auto& [e, f, sign] : entries[j]) {
      b.terms.emplace_back(net_.junctions[j].kind == JunctionKind::CommonEffort ? id_of(f) : id_of(e),
                           sign);
    }
    balances_.push_back(std::move(b));
  }
  n_vars_ = static_cast<Index>(compact.size());

  // Causal resolution: fire equations in a fixed sweep order until nothing
  // changes. Whatever remains unfired is an algebraic loop or underdetermined.
  struct Equation {
    enum class Type { Store, Source, Resist, Scale, Solution, Balance } type;
    Index construct = -1;
    Index a = -1, b = -1;  // Scale: a = n b. Resist: (in, out). Store/Source: out.
    Index c = -1, d = -1;  // Solution: inputs a, b; outputs c, d
    Index balance = -1;
    bool done = false;
  };
  std::vector<Equation> eqs;
  auto port_of = [&](Index ci, Index p) -> const PortVars& {
    return ports_[port_index_[ci].first + p];
  };
  for (Index i : order_) {
    const auto& c = net_.constructs[i];
    std::visit(
        overloaded{
            [&](const FlowStore&) {
              eqs.push_back({Equation::Type::Store, i, port_of(i, 0).e});
            },
            [&](const EffortStore&) {
              eqs.push_back({Equation::Type::Store, i, port_of(i, 0).f});
            },
            [&](const FlowSource&) {
              eqs.push_back({Equation::Type::Source, i, port_of(i, 0).f});
            },
            [&](const EffortSource&) {
              eqs.push_back({Equation::Type::Source, i, port_of(i, 0).e});
            },
            [&](const Resistive& r) {
              const auto& p = port_of(i, 0);
              if (r.causality == Causality::Admittance) {
                eqs.push_back({Equation::Type::Resist, i, p.e, p.f});
              } else {
                eqs.push_back({Equation::Type::Resist, i, p.f, p.e});
              }
              if (auto* al = std::get_if<AlignmentResistance>(&r.map.kind)) {
                auto it = construct_index.find(al->modulator);
                if (it == construct_index.end() || state_of_[it->second] < 0) {
                  throw StructuralError("construct '" + c.id + "': modulator '" + al->modulator +
                                        "' is not a store");
                }
              }
            },
            [&](const Transformer&) {
              eqs.push_back({Equation::Type::Scale, i, port_of(i, 0).e, port_of(i, 1).e});
              eqs.push_back({Equation::Type::Scale, i, port_of(i, 1).f, port_of(i, 0).f});
            },
            [&](const Gyrator&) {
              eqs.push_back({Equation::Type::Scale, i, port_of(i, 0).e, port_of(i, 1).f});
              eqs.push_back({Equation::Type::Scale, i, port_of(i, 1).e, port_of(i, 0).f});
            },
            [&](const TransformerSolution&) {
              Equation eq{Equation::Type::Solution, i, port_of(i, 0).e, port_of(i, 1).e};
              eq.c = port_of(i, 0).f;
              eq.d = port_of(i, 1).f;
              eqs.push_back(eq);
            }},
        c.variant);
  }
  for (Index j = 0; j < static_cast<Index>(balances_.size()); ++j) {
    Equation eq{Equation::Type::Balance};
    eq.balance = j;
    eqs.push_back(eq);
  }

  std::vector<char> known(n_vars_, 0);
  auto conflict = [&](const Equation& eq, Index var) {
    std::string where = eq.construct >= 0 ? "construct '" + net_.constructs[eq.construct].id + "'"
                                          : "junction '" + net_.junctions[eq.balance].id + "'";
    throw StructuralError("causality conflict at " + where + ": variable " + std::to_string(var) +
                          " is determined twice");
  };
  auto assign = [&](const Equation& eq, Index var) {
    if (known[var]) conflict(eq, var);
    known[var] = 1;
  };
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto& eq : eqs) {
      if (eq.done) continue;
      auto emit = [&](Step s) {
        schedule_.push_back(std::make_shared<const Step>(s));
        eq.done = true;
        progress = true;
      };
      switch (eq.type) {
        case Equation::Type::Store:
          assign(eq, eq.a);
          emit({Step::Op::Store, eq.construct, eq.a});
          break;
        case Equation::Type::Source:
          assign(eq, eq.a);
          emit({Step::Op::Source, eq.construct, eq.a});
          break;
        case Equation::Type::Resist:
          if (known[eq.a]) {
            assign(eq, eq.b);
            Step s{Step::Op::Resist, eq.construct, eq.b};
            s.in = eq.a;
            emit(s);
          }
          break;
        case Equation::Type::Scale:
          if (known[eq.a] && known[eq.b]) conflict(eq, eq.a);
          if (known[eq.b]) {
            assign(eq, eq.a);
            Step s{Step::Op::Mul, eq.construct, eq.a};
            s.in = eq.b;
            emit(s);
          } else if (known[eq.a]) {
            assign(eq, eq.b);
            Step s{Step::Op::Div, eq.construct, eq.b};
            s.in = eq.a;
            emit(s);
          }
          break;
        case Equation::Type::Solution:
          if (known[eq.a] && known[eq.b]) {
            assign(eq, eq.c);
            assign(eq, eq.d);
            Step s{Step::Op::Solution, eq.construct, eq.c, eq.d, eq.a, eq.b};
            emit(s);
          }
          break;
        case Equation::Type::Balance: {
          const auto& terms = balances_[eq.balance].terms;
          Index unknown = -1;
          int n_unknown = 0;
          for (Index k = 0; k < static_cast<Index>(terms.size()); ++k) {
            if (!known[terms[k].first]) {
              ++n_unknown;
              unknown = k;
            }
          }
          if (n_unknown == 0 && !terms.empty()) conflict(eq, terms[0].first);
          if (n_unknown == 1) {
            // Repeated appearances of the same variable are not solvable here.
            const Index var = terms[unknown].first;
            int appearances = 0;
            for (const auto& t : terms) appearances += (t.first == var);
            if (appearances == 1) {
              assign(eq, var);
              Step s{Step::Op::Balance, -1, var};
              s.balance = eq.balance;
              s.term = unknown;
              emit(s);
            }
          }
          break;
        }
      }
    }
  }

  std::vector<std::string> stuck;
  for (const auto& eq : eqs) {
    if (eq.done) continue;
    stuck.push_back(eq.construct >= 0 ? net_.constructs[eq.construct].id
                                      : net_.junctions[eq.balance].id);
  }
  if (!stuck.empty()) {
    std::string cycle;
    for (const auto& s : stuck) cycle += (cycle.empty() ? "" : " -> ") + s;
    throw StructuralError("algebraic loop: " + cycle +
                          "; replace the looped maps by an explicit solution map");
  }
  for (Index v = 0; v < n_vars_; ++v) {
    if (!known[v]) throw StructuralError("network variable " + std::to_string(v) + " is undetermined");
  }

  // Link flows and resistive elements, in canonical construct order.
  for (Index i : order_) {
    const auto& c = net_.constructs[i];
    if (c.is_source()) continue;
    for (Index p = 0; p < c.port_count(); ++p) {
      links_.push_back(port_of(i, p).f);
      link_names_.push_back(c.id + ":" + std::to_string(p));
    }
    if (std::holds_alternative<Resistive>(c.variant)) {
      elements_.push_back(i);
      element_names_.push_back(c.id);
    }
  }

  for (const auto& obs : net_.observed) {
    auto it = construct_index.find(obs.construct);
    if (it == construct_index.end()) {
      throw StructuralError("observed variable references unknown construct '" + obs.construct + "'");
    }
    if (obs.kind == Observed::Kind::State && state_of_[it->second] < 0) {
      throw StructuralError("observed state of '" + obs.construct + "', which is not a store");
    }
  }
}

std::vector<std::string> NetworkSystem::state_names() const {
  std::vector<std::string> names;
  for (Index i : stores_) names.push_back(net_.constructs[i].id);
  return names;
}

template <typename Scalar>
void NetworkSystem::evaluate(double t, const VectorX<Scalar>& x, const VectorX<Scalar>& u,
                             const VectorX<Scalar>& w, std::vector<Scalar>& vars) const {
  require_dim(x.size(), state_dim(), "network state");
  require_dim(u.size(), input_dim(), "network input");
  require_dim(w.size(), param_dim(), "network parameters");
  const Index nd = Lift<Scalar>::width(x, w);
  vars.assign(n_vars_, Lift<Scalar>::constant(0.0, nd));
  const Scalar* wp = w.data();
  auto params_of = [&](Index ci) { return param_offset_[ci] >= 0 ? wp + param_offset_[ci] : wp; };
  auto modulus_of = [&](Index ci) -> Scalar {
    const auto& c = net_.constructs[ci];
    const ModulusMap& m = std::holds_alternative<Transformer>(c.variant)
                              ? std::get<Transformer>(c.variant).modulus
                              : std::get<Gyrator>(c.variant).modulus;
    return m.trainable ? params_of(ci)[0] : Lift<Scalar>::constant(m.value, nd);
  };

  for (const auto& sp : schedule_) {
    const Step& s = *sp;
    switch (s.op) {
      case Step::Op::Store: {
        const auto& c = net_.constructs[s.construct];
        VectorX<Scalar> xi(1);
        xi(0) = x(state_of_[s.construct]);
        vars[s.out] = energy_gradient<Scalar>(*energy_of(c), xi, params_of(s.construct))(0);
        break;
      }
      case Step::Op::Source: {
        const auto& c = net_.constructs[s.construct];
        const Signal& sig = std::holds_alternative<FlowSource>(c.variant)
                                ? std::get<FlowSource>(c.variant).signal
                                : std::get<EffortSource>(c.variant).signal;
        vars[s.out] = signal_value<Scalar>(sig, t, x, u, input_of_[s.construct], nd);
        break;
      }
      case Step::Op::Resist: {
        const auto& r = std::get<Resistive>(net_.constructs[s.construct].variant);
        VectorX<Scalar> in(1);
        in(0) = vars[s.in];
        VectorX<Scalar> mod;
        const VectorX<Scalar>* modp = nullptr;
        if (auto* al = std::get_if<AlignmentResistance>(&r.map.kind)) {
          const Construct* m = net_.find(al->modulator);
          const Index slot = state_of_[m - net_.constructs.data()];
          mod.resize(1);
          mod(0) = x(slot);
          modp = &mod;
        }
        vars[s.out] = resistive<Scalar>(r.map, in, params_of(s.construct), modp)(0);
        break;
      }
      case Step::Op::Mul:
        vars[s.out] = modulus_of(s.construct) * vars[s.in];
        break;
      case Step::Op::Div:
        vars[s.out] = vars[s.in] / modulus_of(s.construct);
        break;
      case Step::Op::Solution: {
        const auto& sol = std::get<TransformerSolution>(net_.constructs[s.construct].variant);
        VectorX<Scalar> in(2);
        in << vars[s.in], vars[s.in2];
        VectorX<Scalar> out = sol.map.forward(in, params_of(s.construct));
        vars[s.out] = out(0);
        vars[s.out2] = out(1);
        break;
      }
      case Step::Op::Balance: {
        const auto& terms = balances_[s.balance].terms;
        Scalar acc = Lift<Scalar>::constant(0.0, nd);
        for (Index k = 0; k < static_cast<Index>(terms.size()); ++k) {
          if (k != s.term) acc += static_cast<double>(terms[k].second) * vars[terms[k].first];
        }
        vars[s.out] = acc * (-1.0 / static_cast<double>(terms[s.term].second));
        break;
      }
    }
    settle(vars[s.out], nd);
    if (s.out2 >= 0) settle(vars[s.out2], nd);
  }
}

template void NetworkSystem::evaluate<double>(double, const Vector&, const Vector&, const Vector&,
                                              std::vector<double>&) const;
template void NetworkSystem::evaluate<AD>(double, const VectorX<AD>&, const VectorX<AD>&,
                                          const VectorX<AD>&, std::vector<AD>&) const;

template <typename Scalar>
void NetworkSystem::gather_rhs(const std::vector<Scalar>& vars, VectorX<Scalar>& out) const {
  out.resize(state_dim());
  for (Index k = 0; k < state_dim(); ++k) {
    const Index ci = stores_[k];
    const auto& p = ports_[port_index_[ci].first];
    out(k) = std::holds_alternative<FlowStore>(net_.constructs[ci].variant) ? vars[p.f] : vars[p.e];
  }
}

template <typename Scalar>
void NetworkSystem::gather(Channel c, const VectorX<Scalar>& x, const std::vector<Scalar>& vars,
                           VectorX<Scalar>& out) const {
  switch (c) {
    case Channel::Output: {
      out.resize(static_cast<Index>(net_.observed.size()));
      for (Index k = 0; k < out.size(); ++k) {
        const auto& obs = net_.observed[k];
        const Construct* con = net_.find(obs.construct);
        const Index ci = con - net_.constructs.data();
        const auto& p = ports_[port_index_[ci].first];
        switch (obs.kind) {
          case Observed::Kind::State: out(k) = x(state_of_[ci]); break;
          case Observed::Kind::Effort: out(k) = vars[p.e]; break;
          case Observed::Kind::Flow: out(k) = vars[p.f]; break;
        }
      }
      break;
    }
    case Channel::LinkFlow:
      out.resize(static_cast<Index>(links_.size()));
      for (Index k = 0; k < out.size(); ++k) out(k) = vars[links_[k]];
      break;
    case Channel::ElementPower:
      out.resize(static_cast<Index>(elements_.size()));
      for (Index k = 0; k < out.size(); ++k) {
        const auto& p = ports_[port_index_[elements_[k]].first];
        out(k) = vars[p.e] * vars[p.f];
      }
      break;
  }
}

void NetworkSystem::rhs(double t, const Vector& x, const Vector& u, const Vector& w,
                        Vector& f) const {
  std::vector<double> vars;
  evaluate<double>(t, x, u, w, vars);
  gather_rhs(vars, f);
}

void NetworkSystem::differentiate(Channel* c, double t, const Vector& x, const Vector& u,
                                  const Vector& w, Vector& value, Matrix* dx, Matrix* dw) const {
  const Index n = state_dim();
  const Index m = param_dim();
  const Index nd = n + m;
  VectorX<AD> xa(n), ua(u.size()), wa(m);
  for (Index i = 0; i < n; ++i) xa(i) = AD(x(i), nd, i);
  for (Index i = 0; i < m; ++i) wa(i) = AD(w(i), nd, n + i);
  for (Index i = 0; i < u.size(); ++i) ua(i) = AD(u(i), Vector::Zero(nd));
  std::vector<AD> vars;
  evaluate<AD>(t, xa, ua, wa, vars);
  VectorX<AD> out;
  if (c) {
    gather(*c, xa, vars, out);
  } else {
    gather_rhs(vars, out);
  }
  value.resize(out.size());
  if (dx) dx->setZero(out.size(), n);
  if (dw) dw->setZero(out.size(), m);
  for (Index k = 0; k < out.size(); ++k) {
    value(k) = out(k).value();
    const Vector& d = out(k).derivatives();
    if (d.size() == 0) continue;
    if (dx) dx->row(k) = d.head(n).transpose();
    if (dw) dw->row(k) = d.tail(m).transpose();
  }
}

void NetworkSystem::rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w,
                                 Vector& f, Matrix& dfdx, Matrix& dfdw) const {
  differentiate(nullptr, t, x, u, w, f, &dfdx, &dfdw);
}

Index NetworkSystem::channel_dim(Channel c) const {
  switch (c) {
    case Channel::Output: return static_cast<Index>(net_.observed.size());
    case Channel::LinkFlow: return static_cast<Index>(links_.size());
    case Channel::ElementPower: return static_cast<Index>(elements_.size());
  }
  return 0;
}

void NetworkSystem::channel(Channel c, double t, const Vector& x, const Vector& u, const Vector& w,
                            Vector& value, Matrix* dx, Matrix* dw) const {
  if (dx || dw) {
    differentiate(&c, t, x, u, w, value, dx, dw);
    return;
  }
  std::vector<double> vars;
  evaluate<double>(t, x, u, w, vars);
  gather(c, x, vars, value);
}

std::vector<PortValues> NetworkSystem::port_values(double t, const Vector& x, const Vector& u,
                                                   const Vector& w) const {
  std::vector<double> vars;
  evaluate<double>(t, x, u, w, vars);
  std::vector<PortValues> out;
  for (const auto& p : ports_) {
    out.push_back({net_.constructs[p.construct].id, p.port, vars[p.e], vars[p.f]});
  }
  return out;
}

double NetworkSystem::dirac_residual(double t, const Vector& x, const Vector& u,
                                     const Vector& w) const {
  std::vector<double> vars;
  evaluate<double>(t, x, u, w, vars);
  double residual = 0.0;
  for (const auto& b : balances_) {
    double sum = 0.0;
    for (const auto& [v, sign] : b.terms) sum += sign * vars[v];
    residual += std::abs(sum);
  }
  double power = 0.0;
  for (const auto& p : ports_) {
    power += net_.constructs[p.construct].orientation(p.port) * vars[p.e] * vars[p.f];
  }
  residual += std::abs(power);
  for (const auto& b : bonds_) {
    residual += std::abs(static_cast<double>(b.sign_a + b.sign_b)) * std::abs(vars[b.e] * vars[b.f]);
  }
  return residual;
}

double NetworkSystem::stored_energy(const Vector& x, const Vector& w) const {
  double total = 0.0;
  for (Index k = 0; k < state_dim(); ++k) {
    const Index ci = stores_[k];
    const double* wp = param_offset_[ci] >= 0 ? w.data() + param_offset_[ci] : w.data();
    Vector xi = Vector::Constant(1, x(k));
    total += energy<double>(*energy_of(net_.constructs[ci]), xi, wp);
  }
  return total;
}

std::shared_ptr<const NetworkSystem> assemble_ode(const Network& net) {
  return std::make_shared<const NetworkSystem>(net);
}

double check_dirac(const Network& net, const Vector& state, const Vector& inputs, const Vector& w,
                   double t) {
  NetworkSystem sys(net);
  return sys.dirac_residual(t, state, inputs, w);
}

}  // namespace phl
