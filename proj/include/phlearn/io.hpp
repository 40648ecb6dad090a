#pragma once

#include "phlearn/params.hpp"
#include "phlearn/swarm.hpp"
#include "phlearn/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace phl {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

/// Filesystem failures: unwritable directories, missing or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a of the compact serialization, as 16 hex digits.
std::string config_hash(const Json& config);

Json read_json(const std::string& path);
/// Pretty-printed, newline-terminated.
void write_json(const std::string& path, const Json& value);
void write_text(const std::string& path, const std::string& text);

/// Creates the directory (and parents) and verifies it accepts files.
void ensure_directory(const std::string& dir);

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

Json to_json(const TrainConfig& config);
/// Reads every field present in `j`, keeping `base` values for absent ones.
/// Unknown keys and wrong types raise ConfigError naming "<prefix>.<key>".
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {},
                                   const std::string& prefix = "train");

// ---------------------------------------------------------------------------
// Parameters, models and checkpoints
// ---------------------------------------------------------------------------

Json to_json(const ParamVector& params);
ParamVector params_from_json(const Json& j);

/// Throws StructuralError unless both vectors have identical slices.
void check_layout(const ParamVector& expected, const ParamVector& got);

struct ModelFile {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  ParamVector params;
};
Json to_json(const ModelFile& model);
ModelFile model_from_json(const Json& j);
void write_model(const std::string& path, const ModelFile& model);
ModelFile read_model(const std::string& path);

Json to_json(const TrainState& state);
TrainState train_state_from_json(const Json& j);

/// Final J, R, iteration count, wall time, status.
Json summarize(const TrainReport& report);
std::string summary_text(const TrainReport& report);

// ---------------------------------------------------------------------------
// Tables and manifests
// ---------------------------------------------------------------------------

/// `q,F_learned,F_reference` with 17 significant digits.
void write_potential_csv(std::ostream& os, const PotentialCurve& curve);
void write_potential_csv(const std::string& path, const PotentialCurve& curve);

/// Everything needed to reproduce an output: command, version, seed, the
/// resolved configuration and its hash, plus the files produced.
Json manifest(const std::string& command, const Json& config, std::uint64_t seed,
              const std::vector<std::string>& files);

}  // namespace phl
