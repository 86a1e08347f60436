#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "famf/data.hpp"
#include "famf/model.hpp"

namespace famf::training {

// Two learning-rate groups; both are divided by `decay_factor` at epochs
// decay_start, decay_start + decay_every, ... (0-indexed).
struct Schedule {
  double lr_agg = 0.04;
  double lr_rest = 0.004;
  std::size_t decay_start = 50;
  std::size_t decay_every = 10;
  double decay_factor = 10.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LearningRates {
  double aggregation;
  double rest;
};

LearningRates lr_at(const Schedule& schedule, std::size_t epoch);

struct Moments {
  Tensor m, v;
};

struct OptimizerState {
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
  LearningRates lr{0.0, 0.0};
};

// One Adam update of every trainable parameter from its accumulated grad.
void adam_step(ParameterStore& params, OptimizerState& state, const AdamConfig& adam, LearningRates lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  LearningRates lr{0.0, 0.0};
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_time_s = 0.0;
};

// One JSON object per line.
std::string format_metrics_line(const EpochMetrics& m);

// Shuffled pass over `indices` in mini-batches. Face frames are resampled to
// config().frames per episode with a seed derived from (seed, epoch, id). A
// trailing batch of one is merged into the previous batch; a lone episode
// (single-episode training set) runs batchnorm on its running statistics.
EpochMetrics train_epoch(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                         OptimizerState& state, const Schedule& schedule, const AdamConfig& adam,
                         std::size_t epoch, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochMetrics&)>;

std::vector<EpochMetrics> train(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                                const Schedule& schedule, const AdamConfig& adam, std::uint64_t seed,
                                const EpochCallback& on_epoch = {});

}  // namespace famf::training
