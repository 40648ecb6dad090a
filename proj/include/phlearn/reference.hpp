#pragma once

#include "phlearn/network.hpp"

namespace phl {

/// Mass, spring and damper on one common-velocity junction, driven by a force
/// source. Ids "m", "k", "d", "F"; canonical state (q, p).
struct MsdSpec {
  double m = 1.0;
  double k = 1.0;
  double d = 1.0;
  Signal force = Signal::constant(0.0);
  bool trainable = false;
};
Network build_msd_network(const MsdSpec& spec = {});

/// Series RLC loop on one common-current junction. Ids "C", "L", "R" and an
/// optional voltage source "V"; canonical state (charge, flux).
struct RlcSpec {
  double r = 1.0;
  double l = 1.0;
  double c = 1.0;
  bool with_source = false;
  Signal voltage = Signal::constant(0.0);
  bool trainable = false;
};
Network build_rlc_network(const RlcSpec& spec = {});

/// Chain of basic layers, each a spring k1 in parallel with a damper d1,
/// in series with a mass m2 held by a grounded spring k2 and damper d2.
/// Layer i's constructs are prefixed "L<i>_". Layer 1 is driven by the
/// velocity source "src"; the last layer's mass velocity is observed.
struct LayeredSpec {
  int n_layers = 1;
  Signal drive = Signal::constant(0.0);
  double k1 = 1.0, d1 = 0.5, m2 = 1.0, k2 = 1.0, d2 = 0.5;
  bool trainable = false;
};
Network build_layered_network(const LayeredSpec& spec);

/// Sparse-identification toy: a unit mass "m" driven by force "F", with a
/// grounded damper "d" and a spurious grounded spring "k" (truth 0). The
/// mass momentum is observed; d and k are trainable.
struct SparseToySpec {
  double d = 0.5;
  double k = 0.0;
  Signal force = Signal::sine(1.0, 0.25);
};
Network build_sparse_toy_network(const SparseToySpec& spec = {});

}  // namespace phl
