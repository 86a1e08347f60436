#include "famf/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "famf/binary_io.hpp"
#include "famf/checkpoint.hpp"

namespace famf::commands {

namespace fs = std::filesystem;

namespace {

RunPaths prepare(const config::RunConfig& cfg) {
  RunPaths p{cfg.run_dir};
  fs::create_directories(p.root);
  io::write_text(p.resolved_config(), config::to_json(cfg).dump(2) + "\n");
  return p;
}

data::Dataset load_run_dataset(const RunPaths& p) {
  if (!fs::exists(p.manifest())) {
    throw std::runtime_error("no dataset at " + p.manifest() + "; run the synth command first");
  }
  return data::load_dataset(p.manifest());
}

FamfModel load_model(const config::RunConfig& cfg, const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  const auto header = config::parse_checkpoint_header(ck.header);
  const std::string expected = config::model_fingerprint(cfg.model);
  if (header.fingerprint != expected) {
    throw FingerprintMismatch("checkpoint " + path + " has fingerprint " + header.fingerprint +
                              " but the config's model has " + expected);
  }
  return FamfModel(cfg.model, std::move(ck.params));
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

eval::RunSpec run_spec(const config::RunConfig& cfg) {
  eval::RunSpec s;
  s.model = cfg.model;
  s.schedule = cfg.training;
  s.adam = cfg.adam;
  s.val_fraction = cfg.eval.val_fraction;
  s.cutoff = cfg.eval.cutoff;
  s.eval_frames = cfg.eval.frames;
  return s;
}

std::size_t cmd_synth(const config::RunConfig& cfg) {
  const RunPaths p = prepare(cfg);
  const data::Dataset ds = data::generate(cfg.synth);
  data::save_dataset(p.data_dir(), ds);
  return ds.episodes.size();
}

std::vector<training::EpochMetrics> cmd_train(const config::RunConfig& cfg) {
  const RunPaths p = prepare(cfg);
  const data::Dataset ds = load_run_dataset(p);
  const data::Split split = data::split_dataset(ds, cfg.eval.val_fraction, cfg.seed);
  std::ofstream log(p.metrics(), std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + p.metrics());
  std::vector<training::EpochMetrics> history;
  FamfModel model = eval::train_model(run_spec(cfg), ds, split, cfg.seed, [&](const training::EpochMetrics& m) {
    log << training::format_metrics_line(m) << '\n' << std::flush;
    history.push_back(m);
  });
  save_checkpoint(p.checkpoint(), model.params(), config::checkpoint_header(cfg.model));
  return history;
}

eval::EvalResult cmd_eval(const config::RunConfig& cfg, const std::optional<std::string>& checkpoint) {
  const RunPaths p = prepare(cfg);
  FamfModel model = load_model(cfg, checkpoint.value_or(p.checkpoint()));
  const data::Dataset ds = load_run_dataset(p);
  const data::Split split = data::split_dataset(ds, cfg.eval.val_fraction, cfg.seed);
  eval::EvalResult r = eval::evaluate_model(run_spec(cfg), model, ds, split, cfg.seed);
  io::write_text(p.eval_report(), eval::format_eval_report(r, config::model_fingerprint(cfg.model)));
  return r;
}

std::vector<eval::AblationRow> cmd_ablate(const config::RunConfig& cfg) {
  const RunPaths p = prepare(cfg);
  const data::Dataset ds = load_run_dataset(p);
  const auto grid = eval::expand_grid(run_spec(cfg), cfg.ablation);
  std::vector<std::uint64_t> seeds = cfg.ablation.seeds;
  if (seeds.empty()) seeds.push_back(cfg.seed);
  const bool empty_grid = cfg.ablation.aggregations.empty() && cfg.ablation.fusions.empty() &&
                          cfg.ablation.modality_subsets.empty() && cfg.ablation.clusters.empty() &&
                          cfg.ablation.seeds.empty();
  std::vector<eval::AblationRow> rows;
  if (!empty_grid) rows = eval::run_ablation(grid, ds, seeds, cfg.ablation.jobs);
  io::write_text(p.ablation_table(), eval::format_ablation_table(rows));
  return rows;
}

std::string format_frame_weights(const data::Episode& episode, const std::vector<double>& weights) {
  std::ostringstream os;
  os << "episode\t" << episode.id << "\tlabel\t" << episode.label << '\n';
  os << "frame\tweight\tquality\n";
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const char* q = "unknown";
    if (i < episode.quality.size()) {
      if (episode.quality[i] == data::FrameQuality::kClean) q = "clean";
      if (episode.quality[i] == data::FrameQuality::kCorrupt) q = "corrupt";
    }
    os << i << '\t' << g17(weights[i]) << '\t' << q << '\n';
  }
  return os.str();
}

std::string cmd_inspect(const config::RunConfig& cfg, const std::optional<std::string>& checkpoint,
                        const std::vector<std::uint64_t>& episodes) {
  const RunPaths p = prepare(cfg);
  FamfModel model = load_model(cfg, checkpoint.value_or(p.checkpoint()));
  const data::Dataset ds = load_run_dataset(p);
  std::vector<std::uint64_t> ids = episodes.empty() ? cfg.inspect.episodes : episodes;
  if (ids.empty()) {
    const auto split = data::split_dataset(ds, cfg.eval.val_fraction, cfg.seed);
    for (std::size_t i = 0; i < split.validation.size() && ids.size() < cfg.inspect.max_episodes; ++i) {
      ids.push_back(ds.episodes[split.validation[i]].id);
    }
  }
  const auto agg = model.aggregation_params();
  aggregation::AttentionOptions opts{.activation = cfg.model.phi_activation, .phi_override = std::nullopt};
  if (cfg.model.aggregation == aggregation::Variant::kNetVlad) {
    opts.phi_override = std::vector<double>(agg.total_clusters(), 1.0);
  } else if (cfg.model.aggregation == aggregation::Variant::kGhostVlad) {
    std::vector<double> phi(agg.total_clusters(), 0.0);
    std::fill_n(phi.begin(), agg.clusters, 1.0);
    opts.phi_override = phi;
  }
  std::ostringstream os;
  os << "# frame weights: w_i = sum_k phi_k alpha_k(x_i) / max_k phi_k (constructed per-frame view of cluster attention)\n";
  os << "# attention matrix: row i = fused row, column j = source row, Y_i = sum_j M[i][j] X_j\n";
  for (std::uint64_t id : ids) {
    auto it = std::find_if(ds.episodes.begin(), ds.episodes.end(), [&](const auto& e) { return e.id == id; });
    if (it == ds.episodes.end()) throw std::invalid_argument("no episode with id " + std::to_string(id));
    os << '\n' << format_frame_weights(*it, aggregation::frame_weight_report(it->face, agg, opts));
    if (cfg.model.fusion != fusion::Variant::kConcat) {
      const auto bundle = model.bundle(*it);
      const Tensor m = fusion::attention_matrix_report(bundle.x, model.fusion_params(), cfg.model.fusion);
      os << "attention\n" << fusion::format_attention_report(m, bundle.tags);
    }
  }
  io::write_text(p.inspect_report(), os.str());
  return os.str();
}

}  // namespace famf::commands
