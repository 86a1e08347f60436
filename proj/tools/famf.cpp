#include <CLI11.hpp>
#include <iostream>

#include "famf/binary_io.hpp"
#include "famf/commands.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame aggregation and multi-modal fusion: synth, train, eval, ablate, inspect"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> run_dir;
  app.add_option("-c,--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config value: dotted.key=value (repeatable)");
  app.add_option("--seed", seed, "Override the top-level seed");
  app.add_option("--run-dir", run_dir, "Override the run directory");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset into <run_dir>/data");
  auto* train = app.add_subcommand("train", "Train and write <run_dir>/checkpoint.bin and metrics.jsonl");
  auto* eval = app.add_subcommand("eval", "Evaluate mAP@100 on the validation split");
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid into <run_dir>/ablation.tsv");
  auto* inspect = app.add_subcommand("inspect", "Report frame weights and fusion attention matrices");

  std::optional<std::string> checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path (default <run_dir>/checkpoint.bin)");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint path (default <run_dir>/checkpoint.bin)");
  std::vector<std::uint64_t> episodes;
  inspect->add_option("--episodes", episodes, "Episode ids to inspect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  famf::config::RunConfig cfg;
  try {
    auto all = overrides;
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    if (run_dir) all.push_back("run_dir=" + nlohmann::json(*run_dir).dump());
    cfg = famf::config::parse_run_config(famf::io::read_file(config_path), all);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }

  namespace cmd = famf::commands;
  try {
    if (synth->parsed()) {
      std::cout << "wrote " << cmd::cmd_synth(cfg) << " episodes to " << cfg.run_dir << "/data\n";
    } else if (train->parsed()) {
      for (const auto& m : cmd::cmd_train(cfg)) std::cout << famf::training::format_metrics_line(m) << '\n';
    } else if (eval->parsed()) {
      const auto r = cmd::cmd_eval(cfg, checkpoint);
      std::cout << "map@100 " << r.map << " accuracy " << r.accuracy << '\n';
    } else if (ablate->parsed()) {
      std::cout << famf::eval::format_ablation_table(cmd::cmd_ablate(cfg));
    } else if (inspect->parsed()) {
      std::cout << cmd::cmd_inspect(cfg, checkpoint, episodes);
    }
  } catch (const famf::config::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
