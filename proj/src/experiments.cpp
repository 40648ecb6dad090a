#include "phlearn/experiments.hpp"

#include "phlearn/network.hpp"
#include "phlearn/pendulum.hpp"
#include "phlearn/reference.hpp"
#include "phlearn/swarm.hpp"

#include <random>

namespace phl {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Pendulum: return "pendulum";
    case ExperimentKind::Swarm: return "swarm";
    case ExperimentKind::MsdDemo: return "msd-demo";
    case ExperimentKind::RlcDemo: return "rlc-demo";
    case ExperimentKind::SparseToy: return "sparse-toy";
  }
  return "?";
}

ExperimentKind experiment_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Pendulum, ExperimentKind::Swarm, ExperimentKind::MsdDemo,
                 ExperimentKind::RlcDemo, ExperimentKind::SparseToy}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("experiment", "unknown experiment \"" + name +
                                      "\" (pendulum, swarm, msd-demo, rlc-demo, sparse-toy)");
}

// ---------------------------------------------------------------------------
// Defaults
// ---------------------------------------------------------------------------

namespace {

Json sine_json(double amplitude, double frequency) {
  return {{"amplitude", amplitude}, {"frequency", frequency}};
}

Json base_train(Method method, double h, int iterations, double lr) {
  TrainConfig c;
  c.method = method;
  c.h = h;
  c.max_iterations = iterations;
  c.adam.lr = lr;
  return to_json(c);
}

}  // namespace

Json default_config(ExperimentKind kind) {
  Json j;
  j["experiment"] = to_string(kind);
  j["seed"] = 0;
  j["output_dir"] = "out";
  switch (kind) {
    case ExperimentKind::Pendulum: {
      const Vector k = pendulum_gain();
      j["system"] = {{"hidden", 50},
                     {"init", {{"M", 1.0}, {"J", 1.0}, {"d1", 0.5}, {"d2", 0.5}}},
                     {"plant", {{"M", 0.5}, {"m", 0.2}, {"l", 0.3}, {"g", 9.81}, {"J", 0.006}, {"b", 0.1}}},
                     {"gain", {k(0), k(1), k(2), k(3)}},
                     {"sigma", 0}};
      j["data"] = {{"train_files", Json::array()}, {"t_end", 6.0}, {"h", 0.05}, {"substeps", 10}};
      Json t = base_train(Method::Midpoint, 0.05, 3000, 3e-3);
      t["lambda_equilibrium"] = 0.1;
      t["lr_final_ratio"] = 0.1;
      t["lr_decay_steps"] = 3000;
      j["train"] = t;
      j["eval"] = {{"n_ics", 20}, {"seed", 1000}};
      break;
    }
    case ExperimentKind::Swarm: {
      const CsParams p;
      j["system"] = {{"n", 10},
                     {"d", 1},
                     {"hidden", 100},
                     {"cs", {{"gamma", p.gamma}, {"c_a", p.c_a}, {"l_a", p.l_a}, {"c_r", p.c_r}, {"l_r", p.l_r}}}};
      j["data"] = {{"train_files", Json::array()}, {"n_series", 5}, {"t_end", 10.0}, {"h", 0.1},
                   {"ic_low", -10.0}, {"ic_high", 10.0}, {"substeps", 10}};
      Json t = base_train(Method::Midpoint, 0.1, 2000, 1e-2);
      t["batch"] = "one-trajectory";
      t["lr_final_ratio"] = 0.1;
      t["lr_decay_steps"] = 2000;
      j["train"] = t;
      j["eval"] = {{"n_ics", 10}, {"seed", 1000}};
      break;
    }
    case ExperimentKind::MsdDemo:
      j["system"] = {{"truth", {{"m", 1.0}, {"k", 2.0}, {"d", 0.5}}},
                     {"init", {{"m", 1.0}, {"k", 1.0}, {"d", 1.0}}},
                     {"force", sine_json(1.0, 0.3)}};
      j["data"] = {{"train_files", Json::array()}, {"n_series", 3}, {"t_end", 5.0}, {"h", 0.05},
                   {"ic_range", 1.0}};
      j["train"] = base_train(Method::Midpoint, 0.05, 1500, 2e-2);
      j["train"]["lr_final_ratio"] = 0.05;
      j["train"]["lr_decay_steps"] = 1500;
      j["eval"] = {{"n_ics", 10}, {"seed", 1000}};
      break;
    case ExperimentKind::RlcDemo:
      j["system"] = {{"truth", {{"r", 0.5}, {"l", 1.0}, {"c", 0.5}}},
                     {"init", {{"r", 1.0}, {"l", 1.0}, {"c", 1.0}}},
                     {"voltage", sine_json(1.0, 0.2)}};
      j["data"] = {{"train_files", Json::array()}, {"n_series", 3}, {"t_end", 5.0}, {"h", 0.05},
                   {"ic_range", 1.0}};
      j["train"] = base_train(Method::Midpoint, 0.05, 1500, 2e-2);
      j["train"]["lr_final_ratio"] = 0.05;
      j["train"]["lr_decay_steps"] = 1500;
      j["eval"] = {{"n_ics", 10}, {"seed", 1000}};
      break;
    case ExperimentKind::SparseToy: {
      j["system"] = {{"truth", {{"d", 0.5}, {"k", 0.0}}},
                     {"init", {{"d", 0.8}, {"k", 0.5}}},
                     {"force", sine_json(1.0, 0.25)}};
      j["data"] = {{"train_files", Json::array()}, {"n_series", 2}, {"t_end", 8.0}, {"h", 0.05},
                   {"p_max", 0.5}};
      Json t = base_train(Method::Midpoint, 0.05, 2000, 1e-2);
      t["primal_dual"]["alpha"] = 1e3;
      t["primal_dual"]["lambda0"] = 10.0;
      j["train"] = t;
      j["eval"] = {{"n_ics", 10}, {"seed", 1000}};
      break;
    }
  }
  return j;
}

namespace {

void overlay(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string f = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(f, "unknown key");
    Json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, f);
    } else if (slot.is_array()) {
      if (!value.is_array()) throw ConfigError(f, "expected an array");
      slot = value;
    } else if (slot.is_number()) {
      if (!value.is_number()) throw ConfigError(f, "expected a number");
      // Keep integers integral so the resolved config stays faithful.
      if (slot.is_number_integer() && !value.is_number_integer()) {
        throw ConfigError(f, "expected an integer");
      }
      slot = value;
    } else if (slot.is_string()) {
      if (!value.is_string()) throw ConfigError(f, "expected a string");
      slot = value;
    } else if (slot.is_boolean()) {
      if (!value.is_boolean()) throw ConfigError(f, "expected true or false");
      slot = value;
    } else {
      slot = value;
    }
  }
}

}  // namespace

Json resolve_config(const Json& user) {
  if (!user.is_object()) throw ConfigError("config", "expected an object");
  std::string name = "pendulum";
  if (user.contains("experiment")) {
    if (!user["experiment"].is_string()) throw ConfigError("experiment", "expected a string");
    name = user["experiment"].get<std::string>();
  }
  Json resolved = default_config(experiment_from_string(name));
  overlay(resolved, user, "");
  make_experiment(resolved);  // full validation of values
  return resolved;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

double num(const Json& j, const std::string& path) {
  const Json* p = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!p->contains(key)) throw ConfigError(path, "missing");
    p = &(*p)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!p->is_number()) throw ConfigError(path, "expected a number");
  return p->get<double>();
}

int count(const Json& j, const std::string& path, int min) {
  const double v = num(j, path);
  if (v != static_cast<double>(static_cast<long long>(v)) || v < min) {
    throw ConfigError(path, "expected an integer >= " + std::to_string(min));
  }
  return static_cast<int>(v);
}

double positive_value(const Json& j, const std::string& path) {
  const double v = num(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be positive");
  return v;
}

double nonnegative_value(const Json& j, const std::string& path) {
  const double v = num(j, path);
  if (!(v >= 0.0)) throw ConfigError(path, "must be nonnegative");
  return v;
}

Signal sine_from(const Json& j, const std::string& path) {
  return Signal::sine(num(j, path + ".amplitude"), nonnegative_value(j, path + ".frequency"));
}

std::vector<Trajectory> read_files(const std::vector<std::string>& files) {
  std::vector<Trajectory> out;
  for (const auto& f : files) {
    try {
      out.push_back(read_trajectory_csv(f));
    } catch (const std::exception& e) {
      throw IoError(f + ": " + e.what());
    }
  }
  return out;
}

/// Uniform initial states in [-range, range] for a network system.
std::vector<Vector> uniform_ics(Index dim, int n, double range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-range, range);
  std::vector<Vector> out;
  for (int i = 0; i < n; ++i) {
    Vector x(dim);
    for (Index k = 0; k < dim; ++k) x(k) = u(rng);
    out.push_back(x);
  }
  return out;
}

std::vector<Trajectory> simulate_all(const OdeSystem& sys, const Vector& w,
                                     const std::vector<Vector>& ics, double t_end, double h) {
  std::vector<Trajectory> out;
  for (const auto& x0 : ics) {
    out.push_back(integrate(sys, x0, InputSignal::none(), t_end, h, Method::Rk4, w));
  }
  return out;
}

}  // namespace

std::vector<Trajectory> Experiment::training_data() const {
  if (!train_files.empty()) return read_files(train_files);
  return generate(seed);
}

std::vector<Trajectory> Experiment::eval_data() const { return generate_fresh(eval_seed, eval_count); }

const SwarmModel* Experiment::swarm() const { return dynamic_cast<const SwarmModel*>(model.get()); }

Experiment make_experiment(const Json& c) {
  Experiment e;
  if (!c.contains("experiment") || !c["experiment"].is_string()) {
    throw ConfigError("experiment", "expected a string");
  }
  e.kind = experiment_from_string(c["experiment"].get<std::string>());
  e.config = c;
  if (!c.contains("seed") || !(c["seed"].is_number_unsigned() || (c["seed"].is_number_integer() && c["seed"].get<long long>() >= 0))) {
    throw ConfigError("seed", "expected a nonnegative integer");
  }
  e.seed = c["seed"].get<std::uint64_t>();
  if (!c.contains("output_dir") || !c["output_dir"].is_string()) {
    throw ConfigError("output_dir", "expected a string");
  }
  e.output_dir = c["output_dir"].get<std::string>();
  const Json defaults = default_config(e.kind);
  e.train = train_config_from_json(c.at("train"), train_config_from_json(defaults.at("train")));
  e.eval_count = count(c, "eval.n_ics", 1);
  e.eval_seed = static_cast<std::uint64_t>(count(c, "eval.seed", 0));
  for (const auto& f : c.at("data").at("train_files")) {
    if (!f.is_string()) throw ConfigError("data.train_files", "expected file paths");
    e.train_files.push_back(f.get<std::string>());
  }

  switch (e.kind) {
    case ExperimentKind::Pendulum: {
      SurrogateInit init{positive_value(c, "system.init.M"), positive_value(c, "system.init.J"),
                         nonnegative_value(c, "system.init.d1"), nonnegative_value(c, "system.init.d2")};
      auto model = std::make_shared<PendulumSurrogate>(count(c, "system.hidden", 1), init, e.seed);
      e.model = model;
      e.initial_w = model->parameters().values();
      PendulumDataSpec spec;
      spec.params = {positive_value(c, "system.plant.M"), positive_value(c, "system.plant.m"),
                     positive_value(c, "system.plant.l"), positive_value(c, "system.plant.g"),
                     positive_value(c, "system.plant.J"), positive_value(c, "system.plant.b")};
      spec.params.validate();
      const Json& gain = c.at("system").at("gain");
      if (!gain.is_array() || gain.size() != 4) throw ConfigError("system.gain", "expected 4 numbers");
      for (int i = 0; i < 4; ++i) {
        if (!gain[i].is_number()) throw ConfigError("system.gain", "expected 4 numbers");
        spec.gain(i) = gain[i].get<double>();
      }
      spec.sigma = count(c, "system.sigma", -1);
      if (spec.sigma != 0 && spec.sigma != 1 && spec.sigma != -1) {
        throw ConfigError("system.sigma", "expected -1, 0 (automatic) or 1");
      }
      spec.t_end = positive_value(c, "data.t_end");
      spec.h = positive_value(c, "data.h");
      spec.substeps = count(c, "data.substeps", 1);
      e.generate = [spec](std::uint64_t) { return generate_pendulum_data(pendulum_training_ics(), spec); };
      e.generate_fresh = [spec](std::uint64_t s, int n) {
        return generate_pendulum_data(pendulum_random_ics(n, s), spec);
      };
      break;
    }
    case ExperimentKind::Swarm: {
      SwarmDataSpec spec;
      spec.layout = {count(c, "system.n", 2), count(c, "system.d", 1)};
      if (spec.layout.d > 3) throw ConfigError("system.d", "expected 1, 2 or 3");
      spec.params = {positive_value(c, "system.cs.gamma"), positive_value(c, "system.cs.c_a"),
                     positive_value(c, "system.cs.l_a"), positive_value(c, "system.cs.c_r"),
                     positive_value(c, "system.cs.l_r")};
      spec.params.validate();
      spec.n_series = count(c, "data.n_series", 1);
      spec.t_end = positive_value(c, "data.t_end");
      spec.h = positive_value(c, "data.h");
      spec.ic_low = num(c, "data.ic_low");
      spec.ic_high = num(c, "data.ic_high");
      if (!(spec.ic_high > spec.ic_low)) throw ConfigError("data.ic_high", "must exceed data.ic_low");
      spec.substeps = count(c, "data.substeps", 1);
      auto model = std::make_shared<SwarmModel>(spec.layout, count(c, "system.hidden", 1), e.seed);
      e.model = model;
      e.initial_w = model->parameters().values();
      e.generate = [spec](std::uint64_t s) { return generate_swarm_data(spec, s); };
      e.generate_fresh = [spec](std::uint64_t s, int n) {
        SwarmDataSpec fresh = spec;
        fresh.n_series = n;
        return generate_swarm_data(fresh, s);
      };
      break;
    }
    case ExperimentKind::MsdDemo: {
      const Signal force = sine_from(c, "system.force");
      MsdSpec truth{positive_value(c, "system.truth.m"), positive_value(c, "system.truth.k"),
                    nonnegative_value(c, "system.truth.d"), force, true};
      MsdSpec init{positive_value(c, "system.init.m"), positive_value(c, "system.init.k"),
                   nonnegative_value(c, "system.init.d"), force, true};
      auto truth_sys = assemble_ode(build_msd_network(truth));
      e.model = assemble_ode(build_msd_network(init));
      e.initial_w = e.model->parameters().values();
      const int n = count(c, "data.n_series", 1);
      const double t_end = positive_value(c, "data.t_end"), h = positive_value(c, "data.h");
      const double range = positive_value(c, "data.ic_range");
      e.generate = [=](std::uint64_t s) {
        return simulate_all(*truth_sys, truth_sys->parameters().values(),
                            uniform_ics(truth_sys->state_dim(), n, range, s), t_end, h);
      };
      e.generate_fresh = [=](std::uint64_t s, int m) {
        return simulate_all(*truth_sys, truth_sys->parameters().values(),
                            uniform_ics(truth_sys->state_dim(), m, range, s), t_end, h);
      };
      break;
    }
    case ExperimentKind::RlcDemo: {
      RlcSpec truth{nonnegative_value(c, "system.truth.r"), positive_value(c, "system.truth.l"),
                    positive_value(c, "system.truth.c"), true, sine_from(c, "system.voltage"), true};
      RlcSpec init{nonnegative_value(c, "system.init.r"), positive_value(c, "system.init.l"),
                   positive_value(c, "system.init.c"), true, sine_from(c, "system.voltage"), true};
      auto truth_sys = assemble_ode(build_rlc_network(truth));
      e.model = assemble_ode(build_rlc_network(init));
      e.initial_w = e.model->parameters().values();
      const int n = count(c, "data.n_series", 1);
      const double t_end = positive_value(c, "data.t_end"), h = positive_value(c, "data.h");
      const double range = positive_value(c, "data.ic_range");
      e.generate = [=](std::uint64_t s) {
        return simulate_all(*truth_sys, truth_sys->parameters().values(),
                            uniform_ics(truth_sys->state_dim(), n, range, s), t_end, h);
      };
      e.generate_fresh = [=](std::uint64_t s, int m) {
        return simulate_all(*truth_sys, truth_sys->parameters().values(),
                            uniform_ics(truth_sys->state_dim(), m, range, s), t_end, h);
      };
      break;
    }
    case ExperimentKind::SparseToy: {
      const Signal force = sine_from(c, "system.force");
      SparseToySpec truth{nonnegative_value(c, "system.truth.d"), nonnegative_value(c, "system.truth.k"), force};
      SparseToySpec init{nonnegative_value(c, "system.init.d"), nonnegative_value(c, "system.init.k"), force};
      auto truth_sys = assemble_ode(build_sparse_toy_network(truth));
      e.model = assemble_ode(build_sparse_toy_network(init));
      e.initial_w = e.model->parameters().values();
      e.primal_dual = true;
      const int n = count(c, "data.n_series", 1);
      const double t_end = positive_value(c, "data.t_end"), h = positive_value(c, "data.h");
      const double p_max = nonnegative_value(c, "data.p_max");
      // State order (k elongation, m momentum); the spring starts relaxed.
      e.generate = [=](std::uint64_t) {
        std::vector<Vector> ics;
        for (int i = 0; i < n; ++i) {
          Vector x = Vector::Zero(2);
          x(1) = n == 1 ? 0.0 : p_max * i / (n - 1);
          ics.push_back(x);
        }
        return simulate_all(*truth_sys, truth_sys->parameters().values(), ics, t_end, h);
      };
      e.generate_fresh = [=](std::uint64_t s, int m) {
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<double> u(-p_max, p_max);
        std::vector<Vector> ics;
        for (int i = 0; i < m; ++i) {
          Vector x = Vector::Zero(2);
          x(1) = u(rng);
          ics.push_back(x);
        }
        return simulate_all(*truth_sys, truth_sys->parameters().values(), ics, t_end, h);
      };
      break;
    }
  }
  return e;
}

}  // namespace phl
