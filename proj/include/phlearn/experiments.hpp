#pragma once

#include "phlearn/io.hpp"
#include "phlearn/ode_system.hpp"
#include "phlearn/train.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace phl {

enum class ExperimentKind { Pendulum, Swarm, MsdDemo, RlcDemo, SparseToy };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

/// Complete configuration with every default filled in.
Json default_config(ExperimentKind kind);

/// Overlays `user` on the defaults of its "experiment" (pendulum when
/// absent). Unknown keys and type mismatches raise ConfigError with the
/// dotted field path.
Json resolve_config(const Json& user);

/// A configured experiment: model, starting point and data generators.
struct Experiment {
  ExperimentKind kind = ExperimentKind::Pendulum;
  Json config;  // resolved
  std::uint64_t seed = 0;
  std::string output_dir;

  SystemPtr model;
  Vector initial_w;
  TrainConfig train;
  bool primal_dual = false;
  int eval_count = 0;
  std::vector<std::string> train_files;  // optional CSVs replacing generated data

  /// Training data (read from train_files when given, else generated from seed).
  std::vector<Trajectory> training_data() const;
  /// Fresh initial conditions in the experiment's ranges, drawn from the eval seed.
  std::vector<Trajectory> eval_data() const;

  /// The swarm model when kind == Swarm, else null.
  const SwarmModel* swarm() const;

  std::function<std::vector<Trajectory>(std::uint64_t)> generate;
  std::function<std::vector<Trajectory>(std::uint64_t, int)> generate_fresh;
  std::uint64_t eval_seed = 0;
};

Experiment make_experiment(const Json& resolved);

}  // namespace phl
