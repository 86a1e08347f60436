#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "famf/config.hpp"
#include "famf/data.hpp"
#include "famf/model.hpp"
#include "famf/training.hpp"

namespace famf::eval {

inline constexpr std::size_t kDefaultCutoff = 100;

// Average precision of one ranked retrieval list:
//   (1/m) * sum over positives found within the first `cutoff` ranks of the
//   precision at that positive's rank.
// Positives ranked beyond the cutoff contribute 0. Requires m > 0.
double average_precision(std::span<const std::uint64_t> ranked, const std::set<std::uint64_t>& positives,
                         std::size_t m, std::size_t cutoff = kDefaultCutoff);

struct ScoredItem {
  std::uint64_t id;
  double score;
};

struct ScoreTable {
  std::uint32_t identity = 0;
  std::vector<ScoredItem> ranked;  // descending score, ties by ascending id
  std::set<std::uint64_t> positives;
  std::size_t cutoff = kDefaultCutoff;
};

// Sorts by descending score with ties broken by ascending id.
void rank_items(std::vector<ScoredItem>& items);

double average_precision(const ScoreTable& table);

// Mean AP over tables with at least one positive. Tables without positives
// are skipped (a warning is written to stderr). Returns 0 if none remain.
double map_at_100(std::span<const ScoreTable> tables);

// One table per identity: all episodes ranked by that identity's score,
// truncated to `cutoff`. `scores` is row-per-episode.
std::vector<ScoreTable> build_score_tables(std::span<const std::uint64_t> ids, std::span<const std::uint32_t> labels,
                                           const std::vector<std::vector<double>>& scores, std::size_t num_classes,
                                           std::size_t cutoff = kDefaultCutoff);

struct EvalResult {
  double map = 0.0;
  double accuracy = 0.0;
  std::vector<std::pair<std::uint32_t, double>> per_identity_ap;
};

// Eval-mode softmax scores for the given episodes; faces resampled to
// `frames` rows with a seed derived from (seed, episode id).
EvalResult evaluate(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                    std::size_t frames, std::uint64_t seed, std::size_t cutoff = kDefaultCutoff);

std::string format_eval_report(const EvalResult& result, const std::string& fingerprint);

// Training + evaluation of one configuration with one seed; the unit shared
// by the train/eval commands and the ablation driver.
struct RunSpec {
  FamfConfig model;
  training::Schedule schedule;
  training::AdamConfig adam;
  double val_fraction = 0.2;
  std::size_t cutoff = kDefaultCutoff;
  std::optional<std::size_t> eval_frames;
};

std::uint64_t model_seed(std::uint64_t seed);
std::uint64_t eval_seed(std::uint64_t seed);

FamfModel train_model(const RunSpec& spec, const data::Dataset& dataset, const data::Split& split, std::uint64_t seed,
                      const training::EpochCallback& on_epoch = {});
EvalResult evaluate_model(const RunSpec& spec, FamfModel& model, const data::Dataset& dataset,
                          const data::Split& split, std::uint64_t seed);

struct AblationCell {
  RunSpec spec;
  std::string fingerprint;  // over model + schedule + adam + eval settings
};

struct AblationRow {
  std::string fingerprint;
  std::uint64_t seed = 0;
  double map = 0.0;
  double wall_time_s = 0.0;
  std::string aggregation, fusion, modalities;
  std::size_t clusters = 0;
};

AblationCell make_cell(const RunSpec& spec);

// Expands aggregation x fusion x modality subset x cluster count over a base
// spec. Empty axes keep the base value.
std::vector<AblationCell> expand_grid(const RunSpec& base, const config::AblationSettings& settings);

// Runs every (cell, seed). The split for a seed is split_dataset(dataset,
// val_fraction, seed). Cells run on up to `jobs` threads; row order is
// cell-major, seed-minor regardless of scheduling.
std::vector<AblationRow> run_ablation(std::span<const AblationCell> grid, const data::Dataset& dataset,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

// Tab-separated, header:
//   fingerprint seed map wall_time_s aggregation fusion modalities clusters
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace famf::eval
