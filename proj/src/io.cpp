#include "phlearn/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace phl {

namespace fs = std::filesystem;

std::string config_hash(const Json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

void write_json(const std::string& path, const Json& value) {
  write_text(path, value.dump(2) + "\n");
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
  const fs::path probe = fs::path(dir) / ".phlearn_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("directory is not writable: " + dir);
  }
  fs::remove(probe, ec);
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw ConfigError(field, what);
}

double number(const Json& j, const std::string& field) {
  if (!j.is_number()) bad(field, "expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& field) {
  if (!j.is_number_integer()) bad(field, "expected an integer");
  return j.get<int>();
}

std::uint64_t unsigned_integer(const Json& j, const std::string& field) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    bad(field, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

std::string text(const Json& j, const std::string& field) {
  if (!j.is_string()) bad(field, "expected a string");
  return j.get<std::string>();
}

void require_object(const Json& j, const std::string& field) {
  if (!j.is_object()) bad(field, "expected an object");
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector vector_from(const Json& j, const std::string& field) {
  if (!j.is_array()) bad(field, "expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], field);
  return v;
}

}  // namespace

Json to_json(const TrainConfig& c) {
  Json j;
  j["method"] = to_string(c.method);
  j["h"] = c.h;
  j["t_end"] = c.t_end;
  j["lambda_sparsity"] = c.lambda_sparsity;
  j["lambda_dissip"] = c.lambda_dissip;
  j["lambda_equilibrium"] = c.lambda_equilibrium;
  j["dissip_mode"] = c.dissip_mode == DissipMode::Hinge ? "hinge" : "integral";
  j["adam"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
               {"eps", c.adam.eps}};
  j["lr_final_ratio"] = c.lr_final_ratio;
  j["lr_decay_steps"] = c.lr_decay_steps;
  j["primal_dual"] = {{"epsilon", c.primal_dual.epsilon},
                      {"noise_variance", c.primal_dual.noise_variance},
                      {"alpha", c.primal_dual.alpha},
                      {"lambda0", c.primal_dual.lambda0},
                      {"inner_iterations", c.primal_dual.inner_iterations}};
  j["max_iterations"] = c.max_iterations;
  j["tolerance"] = c.tolerance;
  j["seed"] = c.seed;
  j["batch"] = c.batch == BatchStrategy::Full ? "full" : "one-trajectory";
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c, const std::string& prefix) {
  require_object(j, prefix);
  for (const auto& [key, value] : j.items()) {
    const std::string f = prefix + "." + key;
    if (key == "method") {
      try {
        c.method = method_from_string(text(value, f));
      } catch (const ConfigError&) {
        bad(f, "expected \"midpoint\" or \"rk4\"");
      }
    } else if (key == "h") {
      c.h = number(value, f);
    } else if (key == "t_end") {
      c.t_end = number(value, f);
    } else if (key == "lambda_sparsity") {
      c.lambda_sparsity = number(value, f);
    } else if (key == "lambda_dissip") {
      c.lambda_dissip = number(value, f);
    } else if (key == "lambda_equilibrium") {
      c.lambda_equilibrium = number(value, f);
    } else if (key == "dissip_mode") {
      const std::string m = text(value, f);
      if (m == "hinge") c.dissip_mode = DissipMode::Hinge;
      else if (m == "integral") c.dissip_mode = DissipMode::Integral;
      else bad(f, "expected \"hinge\" or \"integral\"");
    } else if (key == "adam") {
      require_object(value, f);
      for (const auto& [k, v] : value.items()) {
        const std::string g = f + "." + k;
        if (k == "lr") c.adam.lr = number(v, g);
        else if (k == "beta1") c.adam.beta1 = number(v, g);
        else if (k == "beta2") c.adam.beta2 = number(v, g);
        else if (k == "eps") c.adam.eps = number(v, g);
        else bad(g, "unknown key");
      }
    } else if (key == "lr_final_ratio") {
      c.lr_final_ratio = number(value, f);
    } else if (key == "lr_decay_steps") {
      c.lr_decay_steps = integer(value, f);
    } else if (key == "primal_dual") {
      require_object(value, f);
      for (const auto& [k, v] : value.items()) {
        const std::string g = f + "." + k;
        if (k == "epsilon") c.primal_dual.epsilon = number(v, g);
        else if (k == "noise_variance") c.primal_dual.noise_variance = number(v, g);
        else if (k == "alpha") c.primal_dual.alpha = number(v, g);
        else if (k == "lambda0") c.primal_dual.lambda0 = number(v, g);
        else if (k == "inner_iterations") c.primal_dual.inner_iterations = integer(v, g);
        else bad(g, "unknown key");
      }
    } else if (key == "max_iterations") {
      c.max_iterations = integer(value, f);
    } else if (key == "tolerance") {
      c.tolerance = number(value, f);
    } else if (key == "seed") {
      c.seed = unsigned_integer(value, f);
    } else if (key == "batch") {
      const std::string b = text(value, f);
      if (b == "full") c.batch = BatchStrategy::Full;
      else if (b == "one-trajectory") c.batch = BatchStrategy::OneTrajectory;
      else bad(f, "expected \"full\" or \"one-trajectory\"");
    } else {
      bad(f, "unknown key");
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    throw ConfigError(prefix + "." + e.field(), what.substr(e.field().size() + 2));
  }
  return c;
}

// ---------------------------------------------------------------------------

Json to_json(const ParamVector& params) {
  Json slices = Json::array();
  for (const auto& s : params.slices()) {
    slices.push_back({{"name", s.name}, {"values", vector_json(params.read(s.name))}});
  }
  return slices;
}

ParamVector params_from_json(const Json& j) {
  if (!j.is_array()) throw StructuralError("parameters: expected an array of slices");
  ParamVector p;
  for (const auto& s : j) {
    if (!s.is_object() || !s.contains("name") || !s.contains("values")) {
      throw StructuralError("parameters: slice needs name and values");
    }
    p.append(text(s["name"], "parameters.name"), vector_from(s["values"], "parameters.values"));
  }
  return p;
}

void check_layout(const ParamVector& expected, const ParamVector& got) {
  const auto& a = expected.slices();
  const auto& b = got.slices();
  if (a.size() != b.size()) {
    throw StructuralError("parameter file has " + std::to_string(b.size()) +
                          " slices, model expects " + std::to_string(a.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].size != b[i].size) {
      throw StructuralError("parameter slice " + std::to_string(i) + ": file has \"" + b[i].name +
                            "\" (" + std::to_string(b[i].size) + "), model expects \"" +
                            a[i].name + "\" (" + std::to_string(a[i].size) + ")");
    }
  }
}

Json to_json(const ModelFile& m) {
  return {{"format", "phlearn-model"},
          {"version", kVersion},
          {"experiment", m.experiment},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"parameters", to_json(m.params)}};
}

ModelFile model_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "phlearn-model") {
    throw IoError("not a model file");
  }
  ModelFile m;
  m.experiment = text(j.at("experiment"), "experiment");
  m.config_hash = text(j.at("config_hash"), "config_hash");
  m.seed = unsigned_integer(j.at("seed"), "seed");
  m.params = params_from_json(j.at("parameters"));
  return m;
}

void write_model(const std::string& path, const ModelFile& model) {
  write_json(path, to_json(model));
}

ModelFile read_model(const std::string& path) { return model_from_json(read_json(path)); }

Json to_json(const TrainState& s) {
  return {{"format", "phlearn-checkpoint"},
          {"version", kVersion},
          {"w", vector_json(s.w)},
          {"adam_m", vector_json(s.adam.m)},
          {"adam_v", vector_json(s.adam.v)},
          {"adam_t", s.adam.t},
          {"iteration", s.iteration},
          {"lambda", s.lambda},
          {"alpha", s.alpha},
          {"flips", s.flips},
          {"last_sign", s.last_sign},
          {"best_w", vector_json(s.best_w)},
          {"best_fit", s.best_fit},
          {"best_sparsity", s.best_sparsity}};
}

TrainState train_state_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "phlearn-checkpoint") {
    throw IoError("not a checkpoint file");
  }
  TrainState s;
  s.w = vector_from(j.at("w"), "w");
  s.adam.m = vector_from(j.at("adam_m"), "adam_m");
  s.adam.v = vector_from(j.at("adam_v"), "adam_v");
  s.adam.t = j.at("adam_t").get<long>();
  s.iteration = integer(j.at("iteration"), "iteration");
  s.lambda = number(j.at("lambda"), "lambda");
  s.alpha = number(j.at("alpha"), "alpha");
  s.flips = integer(j.at("flips"), "flips");
  s.last_sign = integer(j.at("last_sign"), "last_sign");
  s.best_w = vector_from(j.at("best_w"), "best_w");
  s.best_fit = number(j.at("best_fit"), "best_fit");
  s.best_sparsity = number(j.at("best_sparsity"), "best_sparsity");
  return s;
}

namespace {

double mean_wall(const TrainReport& r) {
  if (r.wall_ms.empty()) return 0.0;
  double s = 0.0;
  for (double w : r.wall_ms) s += w;
  return s / static_cast<double>(r.wall_ms.size());
}

}  // namespace

Json summarize(const TrainReport& r) {
  Json j;
  j["iterations"] = r.iterations;
  j["first_iteration"] = r.first_iteration;
  j["initial_J"] = r.fit.empty() ? 0.0 : r.fit.front();
  j["final_J"] = r.fit.empty() ? 0.0 : r.fit.back();
  j["final_R"] = r.reg.empty() ? 0.0 : r.reg.back();
  j["final_lambda"] = r.lambda.empty() ? 0.0 : r.lambda.back();
  j["wall_ms_per_iteration"] = mean_wall(r);
  j["converged"] = r.converged;
  j["diverged"] = r.diverged;
  j["message"] = r.message;
  return j;
}

std::string summary_text(const TrainReport& r) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "iterations         " << r.iterations << " (from " << r.first_iteration << ")\n";
  if (!r.fit.empty()) {
    os << "J initial / final  " << r.fit.front() << " / " << r.fit.back() << '\n';
    os << "R final            " << r.reg.back() << '\n';
    os << "lambda final       " << r.lambda.back() << '\n';
  }
  os << "wall ms/iteration  " << mean_wall(r) << '\n';
  os << "status             "
     << (r.diverged ? "diverged" : (r.converged ? "converged" : "iteration budget reached")) << '\n';
  if (!r.message.empty()) os << "note               " << r.message << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

void write_potential_csv(std::ostream& os, const PotentialCurve& curve) {
  os << "q,F_learned,F_reference\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < curve.q.size(); ++i) {
    os << curve.q[i] << ',' << curve.learned[i] << ',' << curve.reference[i] << '\n';
  }
}

void write_potential_csv(const std::string& path, const PotentialCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_potential_csv(out, curve);
}

Json manifest(const std::string& command, const Json& config, std::uint64_t seed,
              const std::vector<std::string>& files) {
  return {{"command", command},
          {"version", kVersion},
          {"seed", seed},
          {"config_hash", config_hash(config)},
          {"config", config},
          {"files", files}};
}

}  // namespace phl
