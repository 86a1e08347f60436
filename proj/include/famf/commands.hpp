#pragma once

// The five CLI commands as library functions. Every output lands under
// RunConfig::run_dir; inputs are never modified.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "famf/config.hpp"
#include "famf/eval.hpp"

namespace famf::commands {

// Layout of a run directory.
struct RunPaths {
  std::string root;
  std::string data_dir() const { return root + "/data"; }
  std::string manifest() const { return data_dir() + "/manifest.txt"; }
  std::string checkpoint() const { return root + "/checkpoint.bin"; }
  std::string metrics() const { return root + "/metrics.jsonl"; }
  std::string eval_report() const { return root + "/eval_report.txt"; }
  std::string ablation_table() const { return root + "/ablation.tsv"; }
  std::string inspect_report() const { return root + "/inspect_report.txt"; }
  std::string resolved_config() const { return root + "/resolved_config.json"; }
};

// Raised when a checkpoint does not belong to the configured model.
class FingerprintMismatch : public config::ConfigError {
 public:
  using config::ConfigError::ConfigError;
};

eval::RunSpec run_spec(const config::RunConfig& cfg);

std::size_t cmd_synth(const config::RunConfig& cfg);
std::vector<training::EpochMetrics> cmd_train(const config::RunConfig& cfg);
eval::EvalResult cmd_eval(const config::RunConfig& cfg, const std::optional<std::string>& checkpoint = {});
std::vector<eval::AblationRow> cmd_ablate(const config::RunConfig& cfg);
std::string cmd_inspect(const config::RunConfig& cfg, const std::optional<std::string>& checkpoint = {},
                        const std::vector<std::uint64_t>& episodes = {});

// Frame-weight section of the inspect report for one episode.
std::string format_frame_weights(const data::Episode& episode, const std::vector<double>& weights);

}  // namespace famf::commands
