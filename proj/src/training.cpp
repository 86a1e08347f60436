#include "famf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "famf/seed.hpp"

namespace famf::training {

void Schedule::validate() const {
  if (!(lr_agg >= 0.0) || !(lr_rest >= 0.0)) throw std::invalid_argument("training learning rates must be non-negative");
  if (decay_every == 0) throw std::invalid_argument("training.decay_every must be positive");
  if (!(decay_factor > 0.0)) throw std::invalid_argument("training.decay_factor must be positive");
  if (batch_size == 0) throw std::invalid_argument("training.batch_size must be positive");
}

LearningRates lr_at(const Schedule& s, std::size_t epoch) {
  std::size_t decays = 0;
  if (epoch >= s.decay_start) decays = 1 + (epoch - s.decay_start) / s.decay_every;
  const double f = std::pow(s.decay_factor, static_cast<double>(decays));
  return {s.lr_agg / f, s.lr_rest / f};
}

void adam_step(ParameterStore& params, OptimizerState& state, const AdamConfig& adam, LearningRates lr) {
  ++state.step;
  state.lr = lr;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto [it, fresh] = state.moments.try_emplace(name);
    if (fresh) it->second = {Tensor(p.value.shape()), Tensor(p.value.shape())};
    auto m = it->second.m.data();
    auto v = it->second.v.data();
    auto g = p.grad.data();
    auto w = p.value.data();
    const double rate = p.group == ParamGroup::kAggregation ? lr.aggregation : lr.rest;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= rate * mhat / (std::sqrt(vhat) + adam.eps);
    }
  }
}

std::string format_metrics_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["lr_agg"] = m.lr.aggregation;
  j["lr_rest"] = m.lr.rest;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  j["wall_time_s"] = m.wall_time_s;
  return j.dump();
}

EpochMetrics train_epoch(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                         OptimizerState& state, const Schedule& schedule, const AdamConfig& adam,
                         std::size_t epoch, std::uint64_t seed) {
  if (indices.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  const auto start = std::chrono::steady_clock::now();
  const LearningRates lr = lr_at(schedule, epoch);
  const std::uint64_t epoch_seed = derive_seed(seed, 1000 + epoch);

  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::mt19937_64 rng(derive_seed(epoch_seed, 0));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::pair<std::size_t, std::size_t>> batches;  // [begin, end)
  for (std::size_t b = 0; b < order.size(); b += schedule.batch_size) {
    batches.emplace_back(b, std::min(order.size(), b + schedule.batch_size));
  }
  if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
    batches[batches.size() - 2].second = batches.back().second;
    batches.pop_back();
  }

  const std::size_t frames = model.config().frames;
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  for (const auto& [begin, end] : batches) {
    std::vector<data::Episode> sampled;
    std::vector<std::size_t> labels;
    for (std::size_t i = begin; i < end; ++i) {
      const data::Episode& ep = dataset.episodes[order[i]];
      sampled.push_back(with_sampled_frames(ep, frames, derive_seed(epoch_seed, ep.id + 1)));
      labels.push_back(ep.label);
    }
    std::vector<const data::Episode*> ptrs;
    for (const auto& e : sampled) ptrs.push_back(&e);

    // Batch statistics of a single episode are degenerate; use the running ones.
    const auto mode = ptrs.size() == 1 ? BatchNormMode::kEval : BatchNormMode::kTrain;
    Tape tape;
    model.params().zero_grad();
    Var logits = model.forward(tape, ptrs, mode);
    Var loss = ops::cross_entropy_with_logits(logits, labels);
    tape.backward(loss);
    adam_step(model.params(), state, adam, lr);

    const std::size_t n = end - begin;
    loss_sum += loss.value()[0] * static_cast<double>(n);
    const Tensor& z = logits.value();
    for (std::size_t r = 0; r < n; ++r) {
      auto row = z.row_span(r);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == labels[r]) ++correct;
    }
    seen += n;
  }
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr;
  m.loss = loss_sum / static_cast<double>(seen);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<EpochMetrics> train(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                                const Schedule& schedule, const AdamConfig& adam, std::uint64_t seed,
                                const EpochCallback& on_epoch) {
  schedule.validate();
  OptimizerState state;
  std::vector<EpochMetrics> history;
  for (std::size_t e = 0; e < schedule.epochs; ++e) {
    history.push_back(train_epoch(model, dataset, indices, state, schedule, adam, e, seed));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

}  // namespace famf::training
