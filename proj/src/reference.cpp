#include "phlearn/reference.hpp"

#include <stdexcept>

namespace phl {

namespace {

Construct flow_store(std::string id, double coefficient, bool trainable) {
  return {std::move(id), FlowStore{EnergyMap{QuadraticEnergy{coefficient, trainable}}}};
}

Construct effort_store(std::string id, double coefficient, bool trainable) {
  return {std::move(id), EffortStore{EnergyMap{QuadraticEnergy{coefficient, trainable}}}};
}

Construct damper(std::string id, double value, bool trainable,
                 Causality causality = Causality::Admittance) {
  return {std::move(id), Resistive{ResistiveMap{LinearResistance{value, trainable}}, causality}};
}

}  // namespace

Network build_msd_network(const MsdSpec& spec) {
  Network net;
  net.constructs = {flow_store("m", 1.0 / spec.m, spec.trainable),
                    effort_store("k", spec.k, spec.trainable),
                    damper("d", spec.d, spec.trainable),
                    {"F", FlowSource{spec.force}}};
  net.junctions = {{"J", JunctionKind::CommonEffort,
                    {{"m", 0, 1}, {"k", 0, 1}, {"d", 0, 1}, {"F", 0, -1}}}};
  net.observed = {{Observed::Kind::State, "k"}, {Observed::Kind::State, "m"}};
  net.init_params();
  return net;
}

Network build_rlc_network(const RlcSpec& spec) {
  Network net;
  net.constructs = {flow_store("C", 1.0 / spec.c, spec.trainable),
                    effort_store("L", 1.0 / spec.l, spec.trainable),
                    damper("R", spec.r, spec.trainable, Causality::Impedance)};
  Junction loop{"J", JunctionKind::CommonFlow, {{"C", 0, 1}, {"L", 0, 1}, {"R", 0, 1}}};
  if (spec.with_source) {
    net.constructs.push_back({"V", EffortSource{spec.voltage}});
    loop.ports.push_back({"V", 0, -1});
  }
  net.junctions = {loop};
  net.observed = {{Observed::Kind::State, "C"}, {Observed::Kind::State, "L"}};
  net.init_params();
  return net;
}

Network build_layered_network(const LayeredSpec& spec) {
  if (spec.n_layers < 1) throw StructuralError("layered network needs at least one layer");
  Network net;
  net.constructs.push_back({"src", EffortSource{spec.drive}});
  for (int i = 1; i <= spec.n_layers; ++i) {
    const std::string p = "L" + std::to_string(i) + "_";
    net.constructs.push_back(effort_store(p + "k1", spec.k1, spec.trainable));
    net.constructs.push_back(damper(p + "d1", spec.d1, spec.trainable));
    net.constructs.push_back(flow_store(p + "m2", 1.0 / spec.m2, spec.trainable));
    net.constructs.push_back(effort_store(p + "k2", spec.k2, spec.trainable));
    net.constructs.push_back(damper(p + "d2", spec.d2, spec.trainable));

    // Input velocity splits into the relative velocity across k1 || d1 and
    // the mass velocity; the force through the pair drives the mass.
    Junction in{p + "in", JunctionKind::CommonFlow, {}};
    if (i == 1) {
      in.ports.push_back({"src", 0, -1});
    } else {
      in.ports.push_back({"L" + std::to_string(i - 1) + "_node", 0, -1});
    }
    in.ports.push_back({p + "rel", 0, 1});
    in.ports.push_back({p + "node", 0, 1});
    Junction rel{p + "rel", JunctionKind::CommonEffort,
                 {{p + "in", 0, -1}, {p + "k1", 0, 1}, {p + "d1", 0, 1}}};
    Junction node{p + "node", JunctionKind::CommonEffort,
                  {{p + "in", 0, -1}, {p + "m2", 0, 1}, {p + "k2", 0, 1}, {p + "d2", 0, 1}}};
    if (i < spec.n_layers) node.ports.push_back({"L" + std::to_string(i + 1) + "_in", 0, 1});
    net.junctions.push_back(in);
    net.junctions.push_back(rel);
    net.junctions.push_back(node);
  }
  net.observed = {{Observed::Kind::Effort, "L" + std::to_string(spec.n_layers) + "_m2"}};
  net.init_params();
  return net;
}

Network build_sparse_toy_network(const SparseToySpec& spec) {
  Network net;
  net.constructs = {flow_store("m", 1.0, false), damper("d", spec.d, true),
                    effort_store("k", spec.k, true), {"F", FlowSource{spec.force}}};
  net.junctions = {{"J", JunctionKind::CommonEffort,
                    {{"m", 0, 1}, {"k", 0, 1}, {"d", 0, 1}, {"F", 0, -1}}}};
  net.observed = {{Observed::Kind::State, "m"}};
  net.init_params();
  return net;
}

}  // namespace phl
