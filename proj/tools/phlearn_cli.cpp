// phlearn command-line front end: generate, train, eval, potential, bench.

#include "phlearn/experiments.hpp"
#include "phlearn/io.hpp"
#include "phlearn/parallel.hpp"
#include "phlearn/swarm.hpp"
#include "phlearn/train.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace phl;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumerical = 2;

struct Options {
  std::string config;
  std::string experiment;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string params;
  bool print_config = false;
};

Json load_user_config(const Options& o) {
  Json user = o.config.empty() ? Json::object() : read_json(o.config);
  if (!user.is_object()) throw ConfigError("config", "expected an object");
  if (!o.experiment.empty()) user["experiment"] = o.experiment;
  if (o.seed) user["seed"] = *o.seed;
  if (!o.out.empty()) user["output_dir"] = o.out;
  return user;
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string numbered(const std::string& stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.csv", stem.c_str(), i);
  return buf;
}

/// Parameters for evaluation: a model file checked against the experiment.
Vector load_params(const Experiment& e, const std::string& path) {
  const ModelFile m = read_model(path);
  check_layout(e.model->parameters(), m.params);
  return m.params.values();
}

// ---------------------------------------------------------------------------

int cmd_generate(const Experiment& e) {
  ensure_directory(e.output_dir);
  const auto data = e.training_data();
  std::vector<std::string> files;
  for (std::size_t i = 0; i < data.size(); ++i) {
    files.push_back(numbered("train", i));
    write_trajectory_csv(path_in(e.output_dir, files.back()), data[i]);
  }
  Json m = manifest("generate", e.config, e.seed, files);
  m["grid"] = {{"samples", data.empty() ? 0 : data.front().size()},
               {"t_end", data.empty() ? 0.0 : data.front().times.back()}};
  m["parameters"] = to_json(e.model->parameters());
  write_json(path_in(e.output_dir, "manifest.json"), m);
  std::cout << "wrote " << files.size() << " trajectories to " << e.output_dir << '\n';
  return kOk;
}

int cmd_train(const Experiment& e, const std::string& params_path) {
  ensure_directory(e.output_dir);
  const auto data = e.training_data();
  TrainState state = initial_state(e.initial_w, e.train);
  if (!params_path.empty()) {
    const Json j = read_json(params_path);
    if (j.value("format", "") == "phlearn-checkpoint") {
      state = train_state_from_json(j);
      require_dim(state.w.size(), e.model->param_dim(), "checkpoint parameters");
    } else {
      const ModelFile m = model_from_json(j);
      check_layout(e.model->parameters(), m.params);
      state = initial_state(m.params.values(), e.train);
    }
  }

  const TrainReport report = e.primal_dual ? train_sparse_primal_dual(*e.model, data, e.train, state)
                                           : train(*e.model, data, e.train, state);

  std::vector<std::string> files{"loss_curve.csv", "model.json", "checkpoint.json", "summary.json",
                                 "summary.txt"};
  {
    std::ofstream curve(path_in(e.output_dir, "loss_curve.csv"));
    if (!curve) throw IoError("cannot write loss curve");
    write_loss_curve(curve, report);
  }
  ParamVector params = e.model->parameters();
  params.set_values(report.w);
  write_model(path_in(e.output_dir, "model.json"), {to_string(e.kind), config_hash(e.config), e.seed, params});
  write_json(path_in(e.output_dir, "checkpoint.json"), to_json(report.state));

  Json summary = summarize(report);
  const auto sims = simulate_like(*e.model, data, e.train, report.w);
  summary["train_mse"] = loss_mse(data, sims);
  summary["seed"] = e.seed;
  summary["config_hash"] = config_hash(e.config);
  write_json(path_in(e.output_dir, "summary.json"), summary);
  std::ostringstream text;
  text << summary_text(report) << "train MSE          " << summary["train_mse"].get<double>() << '\n';
  write_text(path_in(e.output_dir, "summary.txt"), text.str());

  if (e.primal_dual) {
    std::ofstream lt(path_in(e.output_dir, "lambda_trace.csv"));
    if (!lt) throw IoError("cannot write lambda trace");
    lt << "iter,lambda\n" << std::setprecision(17);
    for (std::size_t i = 0; i < report.lambda.size(); ++i) {
      lt << report.first_iteration + static_cast<int>(i) << ',' << report.lambda[i] << '\n';
    }
    files.push_back("lambda_trace.csv");
  }
  write_json(path_in(e.output_dir, "manifest.json"), manifest("train", e.config, e.seed, files));
  std::cout << text.str();
  if (report.diverged) {
    std::cerr << "training diverged: " << report.message << " (last finite iterate saved)\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_eval(const Experiment& e, const std::string& params_path) {
  if (params_path.empty()) throw ConfigError("--params", "eval needs a model file");
  const Vector w = load_params(e, params_path);
  ensure_directory(e.output_dir);
  const auto fresh = e.eval_data();
  const auto sims = simulate_like(*e.model, fresh, e.train, w);
  std::vector<double> per_ic;
  for (std::size_t i = 0; i < fresh.size(); ++i) per_ic.push_back(loss_mse({fresh[i]}, {sims[i]}));
  double mean = 0.0, var = 0.0;
  for (double v : per_ic) mean += v / static_cast<double>(per_ic.size());
  for (double v : per_ic) var += (v - mean) * (v - mean) / static_cast<double>(per_ic.size());

  std::ofstream csv(path_in(e.output_dir, "metrics.csv"));
  if (!csv) throw IoError("cannot write metrics");
  csv << "ic,mse\n" << std::setprecision(17);
  for (std::size_t i = 0; i < per_ic.size(); ++i) csv << i << ',' << per_ic[i] << '\n';

  const auto train_data = e.training_data();
  const double train_mse = loss_mse(train_data, simulate_like(*e.model, train_data, e.train, w));
  Json metrics = {{"n_ics", per_ic.size()}, {"mse_mean", mean}, {"mse_std", std::sqrt(var)},
                  {"mse_per_ic", per_ic}, {"train_mse", train_mse}, {"params", params_path}};
  write_json(path_in(e.output_dir, "metrics.json"), metrics);
  write_json(path_in(e.output_dir, "manifest.json"),
             manifest("eval", e.config, e.seed, {"metrics.csv", "metrics.json"}));
  std::cout << "eval MSE mean " << mean << " std " << std::sqrt(var) << " over " << per_ic.size()
            << " initial conditions; train MSE " << train_mse << '\n';
  return kOk;
}

int cmd_potential(const Experiment& e, const std::string& params_path) {
  const SwarmModel* model = e.swarm();
  if (model == nullptr) throw ConfigError("experiment", "potential needs the swarm experiment");
  if (model->layout().d != 1) throw ConfigError("system.d", "potential curves are one-dimensional");
  const Vector w = params_path.empty() ? e.initial_w : load_params(e, params_path);
  ensure_directory(e.output_dir);
  const Json& cs = e.config.at("system").at("cs");
  const CsParams p{cs.at("gamma").get<double>(), cs.at("c_a").get<double>(), cs.at("l_a").get<double>(),
                   cs.at("c_r").get<double>(), cs.at("l_r").get<double>()};
  const PotentialCurve curve = recover_potential_curve(*model, w, p);
  write_potential_csv(path_in(e.output_dir, "potential.csv"), curve);
  write_json(path_in(e.output_dir, "manifest.json"),
             manifest("potential", e.config, e.seed, {"potential.csv"}));
  std::cout << "wrote " << curve.q.size() << " points to " << path_in(e.output_dir, "potential.csv") << '\n';
  return kOk;
}

/// Counts vector-field evaluations of a wrapped system.
class Counting final : public OdeSystem {
 public:
  explicit Counting(const OdeSystem& inner) : inner_(inner) { params_ = inner.parameters(); }
  using OdeSystem::rhs;
  Index state_dim() const override { return inner_.state_dim(); }
  Index input_dim() const override { return inner_.input_dim(); }
  void rhs(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f) const override {
    ++calls;
    inner_.rhs(t, x, u, w, f);
  }
  void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w, Vector& f,
                    Matrix& dfdx, Matrix& dfdw) const override {
    ++calls;
    inner_.rhs_partials(t, x, u, w, f, dfdx, dfdw);
  }
  Index channel_dim(Channel c) const override { return inner_.channel_dim(c); }
  void channel(Channel c, double t, const Vector& x, const Vector& u, const Vector& w,
               Vector& value, Matrix* dx, Matrix* dw) const override {
    inner_.channel(c, t, x, u, w, value, dx, dw);
  }
  mutable std::atomic<long> calls{0};

 private:
  const OdeSystem& inner_;
};

int cmd_bench(const Experiment& e) {
  ensure_directory(e.output_dir);
  const Json& sys = e.config.contains("system") ? e.config["system"] : Json::object();
  const int hidden = sys.contains("hidden") && sys["hidden"].is_number_integer() ? sys["hidden"].get<int>() : 100;
  const double t_end = e.config.at("data").at("t_end").get<double>();
  const double h = e.train.h;
  const int repeats = 3;

  std::ofstream csv(path_in(e.output_dir, "bench.csv"));
  if (!csv) throw IoError("cannot write bench.csv");
  csv << "n_particles,method,t_end,states,params,rhs_evals,ms_per_iter\n";
  std::cout << std::left << std::setw(12) << "particles" << std::setw(10) << "method" << std::setw(8)
            << "t_end" << std::setw(12) << "rhs_evals" << "ms/iter\n";

  auto run = [&](int n, Method method, double horizon) {
    SwarmDataSpec spec;
    spec.layout = {n, 1};
    spec.n_series = 1;
    spec.t_end = horizon;
    spec.h = h;
    spec.substeps = 1;
    const auto data = generate_swarm_data(spec, e.seed);
    SwarmModel model(spec.layout, hidden, e.seed);
    Counting counting(model);
    TrainConfig c = e.train;
    c.method = method;
    c.t_end = 0.0;
    c.lambda_sparsity = c.lambda_dissip = c.lambda_equilibrium = 0.0;
    double total_ms = 0.0;
    long evals = 0;
    for (int r = 0; r < repeats; ++r) {
      counting.calls = 0;
      const auto t0 = std::chrono::steady_clock::now();
      evaluate_loss(counting, data, {0}, c, {}, model.parameters().values(), true);
      total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      evals = counting.calls;
    }
    const double ms = total_ms / repeats;
    csv << n << ',' << to_string(method) << ',' << horizon << ',' << model.state_dim() << ','
        << model.param_dim() << ',' << evals << ',' << ms << '\n';
    std::cout << std::left << std::setw(12) << n << std::setw(10) << to_string(method) << std::setw(8)
              << horizon << std::setw(12) << evals << ms << '\n';
  };
  for (int n : {2, 5, 10, 20}) {
    for (Method m : {Method::Midpoint, Method::Rk4}) run(n, m, t_end);
  }
  run(10, Method::Midpoint, 2 * t_end);  // trajectory-length scaling
  write_json(path_in(e.output_dir, "manifest.json"), manifest("bench", e.config, e.seed, {"bench.csv"}));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phlearn: port-Hamiltonian model building, simulation and training"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--experiment", o.experiment,
                    "Experiment when no config is given (pendulum, swarm, msd-demo, rlc-demo, sparse-toy)");
    sub->add_option("--seed", o.seed, "Override the configured seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--params", o.params, "Model or checkpoint file");
    sub->add_flag("--print-config", o.print_config, "Print the resolved configuration and exit");
  };
  auto* generate = app.add_subcommand("generate", "Generate training trajectories");
  auto* train_cmd = app.add_subcommand("train", "Train model parameters");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on fresh initial conditions");
  auto* potential = app.add_subcommand("potential", "Export the learned swarm interaction curve");
  auto* bench = app.add_subcommand("bench", "Time gradient evaluations against problem size");
  for (auto* s : {generate, train_cmd, eval, potential, bench}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const Json resolved = resolve_config(load_user_config(o));
    if (o.print_config) {
      std::cout << resolved.dump(2) << '\n';
      return kOk;
    }
    const Experiment e = make_experiment(resolved);
    if (generate->parsed()) return cmd_generate(e);
    if (train_cmd->parsed()) return cmd_train(e, o.params);
    if (eval->parsed()) return cmd_eval(e, o.params);
    if (potential->parsed()) return cmd_potential(e, o.params);
    if (bench->parsed()) return cmd_bench(e);
  } catch (const IntegrationError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const StructuralError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
