#include "famf/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "famf/seed.hpp"

namespace famf::eval {

double average_precision(std::span<const std::uint64_t> ranked, const std::set<std::uint64_t>& positives,
                         std::size_t m, std::size_t cutoff) {
  if (m == 0) throw std::invalid_argument("average precision is undefined without positives");
  const std::size_t depth = std::min(cutoff, ranked.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (!positives.contains(ranked[r])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(m);
}

void rank_items(std::vector<ScoredItem>& items) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

double average_precision(const ScoreTable& table) {
  std::vector<std::uint64_t> ids;
  ids.reserve(table.ranked.size());
  for (const auto& item : table.ranked) ids.push_back(item.id);
  return average_precision(ids, table.positives, table.positives.size(), table.cutoff);
}

double map_at_100(std::span<const ScoreTable> tables) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& t : tables) {
    if (t.positives.empty()) {
      std::cerr << "warning: identity " << t.identity << " has no positives; excluded from mAP\n";
      continue;
    }
    sum += average_precision(t);
    ++used;
  }
  return used ? sum / static_cast<double>(used) : 0.0;
}

std::vector<ScoreTable> build_score_tables(std::span<const std::uint64_t> ids, std::span<const std::uint32_t> labels,
                                           const std::vector<std::vector<double>>& scores, std::size_t num_classes,
                                           std::size_t cutoff) {
  if (ids.size() != labels.size() || ids.size() != scores.size()) {
    throw DimensionError("score table inputs disagree in length");
  }
  std::vector<ScoreTable> tables;
  for (std::size_t q = 0; q < num_classes; ++q) {
    ScoreTable t;
    t.identity = static_cast<std::uint32_t>(q);
    t.cutoff = cutoff;
    for (std::size_t e = 0; e < ids.size(); ++e) {
      if (scores[e].size() != num_classes) throw DimensionError("score row width differs from class count");
      t.ranked.push_back({ids[e], scores[e][q]});
      if (labels[e] == q) t.positives.insert(ids[e]);
    }
    if (t.positives.empty()) continue;
    rank_items(t.ranked);
    if (t.ranked.size() > cutoff) t.ranked.resize(cutoff);
    tables.push_back(std::move(t));
  }
  return tables;
}

EvalResult evaluate(FamfModel& model, const data::Dataset& dataset, std::span<const std::size_t> indices,
                    std::size_t frames, std::uint64_t seed, std::size_t cutoff) {
  std::vector<std::uint64_t> ids;
  std::vector<std::uint32_t> labels;
  std::vector<std::vector<double>> scores;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const data::Episode& ep = dataset.episodes.at(i);
    const auto logits = model.logits(with_sampled_frames(ep, frames, derive_seed(seed, ep.id + 1)));
    const auto top = predict_topk(logits, 1);
    if (!top.empty() && top.front().first == ep.label) ++correct;
    ids.push_back(ep.id);
    labels.push_back(ep.label);
    scores.push_back(softmax_probabilities(logits));
  }
  EvalResult r;
  const auto tables = build_score_tables(ids, labels, scores, model.config().num_classes, cutoff);
  r.map = map_at_100(tables);
  for (const auto& t : tables) r.per_identity_ap.emplace_back(t.identity, average_precision(t));
  r.accuracy = indices.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(indices.size());
  return r;
}

namespace {
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string format_eval_report(const EvalResult& result, const std::string& fingerprint) {
  std::ostringstream os;
  os << "fingerprint\t" << fingerprint << '\n';
  os << "identities\t" << result.per_identity_ap.size() << '\n';
  os << "map@100\t" << g17(result.map) << '\n';
  os << "accuracy\t" << g17(result.accuracy) << '\n';
  for (const auto& [q, ap] : result.per_identity_ap) os << "ap\t" << q << '\t' << g17(ap) << '\n';
  return os.str();
}

std::uint64_t model_seed(std::uint64_t seed) { return derive_seed(seed, 0x6d6f64656cULL); }
std::uint64_t eval_seed(std::uint64_t seed) { return derive_seed(seed, 0x6576616cULL); }

FamfModel train_model(const RunSpec& spec, const data::Dataset& dataset, const data::Split& split, std::uint64_t seed,
                      const training::EpochCallback& on_epoch) {
  if (dataset.dim != spec.model.dim) throw DimensionError("dataset dim differs from model dim");
  FamfModel model(spec.model, model_seed(seed));
  training::train(model, dataset, split.train, spec.schedule, spec.adam, seed, on_epoch);
  return model;
}

EvalResult evaluate_model(const RunSpec& spec, FamfModel& model, const data::Dataset& dataset,
                          const data::Split& split, std::uint64_t seed) {
  return evaluate(model, dataset, split.validation, spec.eval_frames.value_or(spec.model.frames), eval_seed(seed),
                  spec.cutoff);
}

AblationCell make_cell(const RunSpec& spec) {
  nlohmann::ordered_json j;
  j["model"] = config::to_json(spec.model);
  j["training"] = config::to_json(spec.schedule);
  j["adam"] = {{"beta1", spec.adam.beta1}, {"beta2", spec.adam.beta2}, {"eps", spec.adam.eps}};
  j["val_fraction"] = spec.val_fraction;
  j["cutoff"] = spec.cutoff;
  j["eval_frames"] = spec.eval_frames.value_or(spec.model.frames);
  return {spec, config::fingerprint(j)};
}

std::vector<AblationCell> expand_grid(const RunSpec& base, const config::AblationSettings& s) {
  auto or_base = [](const auto& axis, auto value) {
    using T = std::decay_t<decltype(value)>;
    return axis.empty() ? std::vector<T>{value} : std::vector<T>(axis.begin(), axis.end());
  };
  std::vector<AblationCell> grid;
  for (auto agg : or_base(s.aggregations, base.model.aggregation))
    for (auto fus : or_base(s.fusions, base.model.fusion))
      for (const auto& mods : or_base(s.modality_subsets, base.model.modalities))
        for (auto k : or_base(s.clusters, base.model.clusters)) {
          RunSpec spec = base;
          spec.model.aggregation = agg;
          spec.model.fusion = fus;
          spec.model.modalities = mods;
          spec.model.clusters = k;
          spec.model.validate();
          grid.push_back(make_cell(spec));
        }
  return grid;
}

std::vector<AblationRow> run_ablation(std::span<const AblationCell> grid, const data::Dataset& dataset,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs) {
  const std::size_t total = grid.size() * seeds.size();
  std::vector<AblationRow> rows(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const AblationCell& cell = grid[i / seeds.size()];
      const std::uint64_t seed = seeds[i % seeds.size()];
      const auto start = std::chrono::steady_clock::now();
      const data::Split split = data::split_dataset(dataset, cell.spec.val_fraction, seed);
      FamfModel model = train_model(cell.spec, dataset, split, seed);
      const EvalResult r = evaluate_model(cell.spec, model, dataset, split, seed);
      AblationRow& row = rows[i];
      row.fingerprint = cell.fingerprint;
      row.seed = seed;
      row.map = r.map;
      row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      row.aggregation = aggregation::to_string(cell.spec.model.aggregation);
      row.fusion = fusion::to_string(cell.spec.model.fusion);
      for (auto m : cell.spec.model.modalities) row.modalities += (row.modalities.empty() ? "" : "+") + data::to_string(m);
      row.clusters = cell.spec.model.clusters;
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, total));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "fingerprint\tseed\tmap\twall_time_s\taggregation\tfusion\tmodalities\tclusters\n";
  for (const auto& r : rows) {
    os << r.fingerprint << '\t' << r.seed << '\t' << g17(r.map) << '\t' << g17(r.wall_time_s) << '\t'
       << r.aggregation << '\t' << r.fusion << '\t' << r.modalities << '\t' << r.clusters << '\n';
  }
  return os.str();
}

}  // namespace famf::eval
