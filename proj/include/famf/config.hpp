#pragma once

// Run configuration: one JSON document holding every section a command
// needs. Unknown keys are rejected with their dotted path and line number.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "famf/data.hpp"
#include "famf/model.hpp"
#include "famf/training.hpp"

namespace famf::config {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalSettings {
  std::size_t cutoff = 100;
  double val_fraction = 0.2;
  std::optional<std::size_t> frames;  // defaults to model.frames
};

struct AblationSettings {
  std::vector<aggregation::Variant> aggregations;
  std::vector<fusion::Variant> fusions;
  std::vector<std::vector<data::Modality>> modality_subsets;
  std::vector<std::size_t> clusters;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
};

struct InspectSettings {
  std::vector<std::uint64_t> episodes;  // empty: first validation episodes
  std::size_t max_episodes = 4;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 1;
  data::SynthSpec synth;
  FamfConfig model;
  training::Schedule training;
  training::AdamConfig adam;
  EvalSettings eval;
  AblationSettings ablation;
  InspectSettings inspect;
  std::string run_dir = "runs/default";
};

// Parses and validates. Missing keys keep their defaults, except that
// synth.seed defaults to the top-level seed and model.dim/num_classes default
// to the synth section's values. Unset fusion widths are capped at model.dim
// (and fusion_hidden2 at fusion_hidden1).
RunConfig parse_run_config(const std::string& text);

// Applies "dotted.path=value" overrides (value parsed as JSON, falling back
// to a plain string) to the raw document before parsing.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides);

nlohmann::ordered_json to_json(const RunConfig& c);
nlohmann::ordered_json to_json(const FamfConfig& c);
nlohmann::ordered_json to_json(const training::Schedule& s);
nlohmann::ordered_json to_json(const data::SynthSpec& s);
FamfConfig model_from_json(const nlohmann::json& j);

// 16 hex digits of FNV-1a over the compact dump of a JSON value.
std::string fingerprint(const nlohmann::ordered_json& j);
std::string model_fingerprint(const FamfConfig& c);

// Checkpoint header: {"fingerprint": ..., "model": {...}}.
std::string checkpoint_header(const FamfConfig& c);
struct CheckpointHeader {
  std::string fingerprint;
  FamfConfig model;
};
CheckpointHeader parse_checkpoint_header(const std::string& header);

}  // namespace famf::config
