#include "famf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "famf/seed.hpp"

namespace famf {

using aggregation::Variant;
using data::Modality;

void FamfConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model.") + name + " must be positive");
  };
  positive(dim, "dim");
  positive(clusters, "clusters");
  positive(frames, "frames");
  positive(num_classes, "num_classes");
  positive(hidden_dim, "hidden_dim");
  if (aggregation == Variant::kGhostVlad && ghosts == 0) {
    throw std::invalid_argument("model.ghosts must be positive for ghostvlad");
  }
  if (fusion != fusion::Variant::kConcat) {
    if (fusion_hidden1 == 0 || fusion_hidden2 == 0 || fusion_hidden2 > fusion_hidden1 || fusion_hidden1 > dim) {
      throw std::invalid_argument("model fusion widths must satisfy 0 < fusion_hidden2 <= fusion_hidden1 <= dim");
    }
  }
  if (modalities.empty() || modalities.front() != Modality::kFace) {
    throw std::invalid_argument("model.modalities must start with face");
  }
  for (std::size_t i = 1; i < modalities.size(); ++i) {
    if (modalities[i] == Modality::kFace) throw std::invalid_argument("model.modalities lists face twice");
    for (std::size_t j = 1; j < i; ++j)
      if (modalities[i] == modalities[j]) throw std::invalid_argument("model.modalities has duplicates");
  }
  if (!(bn_eps > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(assign_sigma > 0.0)) {
    throw std::invalid_argument("model batchnorm/assignment constants out of range");
  }
}

std::vector<std::string> FamfConfig::row_tags() const {
  std::vector<std::string> tags;
  if (pooled_face) {
    tags.push_back("face");
  } else {
    for (std::size_t k = 0; k < clusters; ++k) tags.push_back("face" + std::to_string(k));
  }
  for (std::size_t i = 1; i < modalities.size(); ++i) tags.push_back(data::to_string(modalities[i]));
  return tags;
}

std::size_t FamfConfig::expected_parameter_count() const {
  const std::size_t assigned = clusters + (aggregation == Variant::kGhostVlad ? ghosts : 0);
  std::size_t n = 2 * assigned * dim + assigned;
  if (aggregation == Variant::kAttentionVlad) n += dim + 1;
  if (fusion == fusion::Variant::kMlma) n += fusion_hidden1 * dim + fusion_hidden2 * fusion_hidden1;
  if (fusion == fusion::Variant::kMma) n += fusion_hidden1 * dim;
  const std::size_t in = classifier_input(), h = hidden_dim, c = num_classes;
  n += in * h + h + 2 * h;  // fc1 + bn1
  n += h * h + h + 2 * h;   // fc2 + bn2
  n += h * c + c;           // fc3
  return n;
}

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

}  // namespace

FamfModel::FamfModel(FamfConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  init(seed);
}

FamfModel::FamfModel(FamfConfig config, ParameterStore params) : config_(std::move(config)) {
  config_.validate();
  FamfModel reference(config_, 0);
  if (reference.params_.size() != params.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(params.size()) + " tensors, model expects " +
                         std::to_string(reference.params_.size()));
  }
  for (const auto& [name, p] : reference.params_) {
    if (!params.contains(name)) throw DimensionError("checkpoint lacks parameter '" + name + "'");
    if (params.at(name).value.shape() != p.value.shape()) {
      throw DimensionError("checkpoint parameter '" + name + "' has shape " +
                           shape_string(params.at(name).value.shape()) + ", expected " +
                           shape_string(p.value.shape()));
    }
  }
  params_ = std::move(params);
}

void FamfModel::init(std::uint64_t seed) {
  const auto& c = config_;
  const std::size_t ghosts = c.aggregation == Variant::kGhostVlad ? c.ghosts : 0;
  auto agg = aggregation::init_params(c.dim, c.clusters, ghosts, c.assign_sigma, derive_seed(seed, 1));
  params_.add("agg.a", agg.a, ParamGroup::kAggregation);
  params_.add("agg.b", agg.b, ParamGroup::kAggregation);
  params_.add("agg.c", agg.c, ParamGroup::kAggregation);
  if (c.aggregation == Variant::kAttentionVlad) {
    params_.add("agg.phi_w", agg.phi_w, ParamGroup::kAggregation);
    params_.add("agg.phi_b", agg.phi_b, ParamGroup::kAggregation);
  }
  if (c.fusion != fusion::Variant::kConcat) {
    auto fp = fusion::init_params(c.dim, c.fusion_hidden1, c.fusion_hidden2, derive_seed(seed, 2));
    params_.add("fusion.w_f2", fp.w_f2);
    if (c.fusion == fusion::Variant::kMlma) params_.add("fusion.w_f1", fp.w_f1);
  }
  std::mt19937_64 rng(derive_seed(seed, 3));
  const std::size_t in = c.classifier_input(), h = c.hidden_dim;
  auto dense = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    params_.add(name + ".w", gaussian(fan_in, fan_out, std::sqrt(2.0 / static_cast<double>(fan_in)), rng));
    params_.add(name + ".b", Tensor::zeros(1, fan_out));
  };
  auto norm = [&](const std::string& name, std::size_t width) {
    params_.add(name + ".gamma", Tensor::full(1, width, 1.0));
    params_.add(name + ".beta", Tensor::zeros(1, width));
    params_.add(name + ".running_mean", Tensor::zeros(1, width), ParamGroup::kRest, false);
    params_.add(name + ".running_var", Tensor::full(1, width, 1.0), ParamGroup::kRest, false);
  };
  dense("cls.fc1", in, h);
  norm("cls.bn1", h);
  dense("cls.fc2", h, h);
  norm("cls.bn2", h);
  dense("cls.fc3", h, c.num_classes);
}

aggregation::AggregationVars FamfModel::bind_aggregation(Tape& tape) {
  aggregation::AggregationVars v;
  v.a = tape.param(params_.at("agg.a"));
  v.b = tape.param(params_.at("agg.b"));
  v.c = tape.param(params_.at("agg.c"));
  if (config_.aggregation == Variant::kAttentionVlad) {
    v.phi_w = tape.param(params_.at("agg.phi_w"));
    v.phi_b = tape.param(params_.at("agg.phi_b"));
  }
  v.clusters = config_.clusters;
  v.ghosts = config_.aggregation == Variant::kGhostVlad ? config_.ghosts : 0;
  return v;
}

Var FamfModel::bundle_rows(Tape& tape, const data::Episode& episode, const aggregation::AggregationVars& agg) {
  const auto& c = config_;
  Tensor face = episode.face_frames() ? episode.face : Tensor::zeros(1, c.dim);
  if (face.cols() != c.dim) {
    throw DimensionError("episode " + std::to_string(episode.id) + " has face width " +
                         std::to_string(face.cols()) + ", model expects " + std::to_string(c.dim));
  }
  Var x = tape.constant(std::move(face));
  Var tmpl;  // D x K
  switch (c.aggregation) {
    case Variant::kNetVlad: tmpl = aggregation::netvlad(x, agg); break;
    case Variant::kGhostVlad: tmpl = aggregation::ghost_vlad(x, agg); break;
    case Variant::kAttentionVlad:
      tmpl = aggregation::attention_vlad(x, agg, {.activation = c.phi_activation, .phi_override = std::nullopt});
      break;
  }
  Var rows = ops::transpose(tmpl);  // K x D
  if (c.intra_normalize) rows = ops::l2_normalize_rows(rows);
  if (c.global_normalize) rows = ops::l2_normalize(rows);
  if (c.pooled_face) rows = ops::mean(rows, 0);
  std::vector<Var> parts{rows};
  for (std::size_t i = 1; i < c.modalities.size(); ++i) {
    const auto& m = episode.modality(c.modalities[i]);
    if (m && (m->rank() != 2 || m->rows() != 1 || m->cols() != c.dim)) {
      throw DimensionError("episode " + std::to_string(episode.id) + ": " + data::to_string(c.modalities[i]) +
                           " row has shape " + shape_string(m->shape()));
    }
    parts.push_back(tape.constant(m ? *m : Tensor::zeros(1, c.dim)));
  }
  return ops::concat_rows(parts);
}

Var FamfModel::forward(Tape& tape, std::span<const data::Episode* const> batch, BatchNormMode mode) {
  if (batch.empty()) throw DimensionError("forward called with an empty batch");
  const auto& c = config_;
  auto agg = bind_aggregation(tape);
  fusion::FusionVars fv;
  if (c.fusion != fusion::Variant::kConcat) {
    fv.w_f2 = tape.param(params_.at("fusion.w_f2"));
    if (c.fusion == fusion::Variant::kMlma) fv.w_f1 = tape.param(params_.at("fusion.w_f1"));
  }
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const data::Episode* ep : batch) {
    Var fused = fusion::fuse(bundle_rows(tape, *ep, agg), fv, c.fusion);
    rows.push_back(fusion::concat(fused));
  }
  Var h = ops::concat_rows(rows);
  auto dense = [&](Var in, const std::string& name) {
    return ops::add(ops::matmul(in, tape.param(params_.at(name + ".w"))), tape.param(params_.at(name + ".b")));
  };
  auto norm = [&](Var in, const std::string& name) {
    ops::BatchNormState st{&params_.at(name + ".running_mean").value, &params_.at(name + ".running_var").value,
                           c.bn_eps, c.bn_momentum};
    return ops::batchnorm(in, tape.param(params_.at(name + ".gamma")), tape.param(params_.at(name + ".beta")), st,
                          mode);
  };
  h = ops::relu(norm(dense(h, "cls.fc1"), "cls.bn1"));
  h = ops::relu(norm(dense(h, "cls.fc2"), "cls.bn2"));
  return dense(h, "cls.fc3");
}

std::vector<double> FamfModel::logits(const data::Episode& episode) {
  Tape tape;
  const data::Episode* one[] = {&episode};
  const Tensor& out = forward(tape, one, BatchNormMode::kEval).value();
  return {out.data().begin(), out.data().end()};
}

fusion::ModalBundle FamfModel::bundle(const data::Episode& episode) {
  Tape tape;
  auto agg = bind_aggregation(tape);
  fusion::ModalBundle b;
  b.x = bundle_rows(tape, episode, agg).value();
  b.k1 = config_.face_rows();
  b.k2 = config_.modalities.size() - 1;
  b.tags = config_.row_tags();
  return b;
}

aggregation::AggregationParams FamfModel::aggregation_params() const {
  aggregation::AggregationParams p;
  p.clusters = config_.clusters;
  p.ghosts = config_.aggregation == Variant::kGhostVlad ? config_.ghosts : 0;
  p.a = params_.at("agg.a").value;
  p.b = params_.at("agg.b").value;
  p.c = params_.at("agg.c").value;
  if (config_.aggregation == Variant::kAttentionVlad) {
    p.phi_w = params_.at("agg.phi_w").value;
    p.phi_b = params_.at("agg.phi_b").value;
  } else {
    p.phi_w = Tensor::zeros(1, config_.dim);
    p.phi_b = Tensor::zeros(1, 1);
  }
  return p;
}

fusion::FusionParams FamfModel::fusion_params() const {
  fusion::FusionParams p;
  if (params_.contains("fusion.w_f2")) p.w_f2 = params_.at("fusion.w_f2").value;
  if (params_.contains("fusion.w_f1")) p.w_f1 = params_.at("fusion.w_f1").value;
  return p;
}

data::Episode with_sampled_frames(const data::Episode& episode, std::size_t frames, std::uint64_t seed) {
  data::Episode out = episode;
  if (!episode.face_frames()) return out;
  const auto idx = data::sample_frame_indices(episode.face_frames(), frames, seed);
  out.face = Tensor::zeros(frames, episode.face.cols());
  out.quality.assign(frames, data::FrameQuality::kUnknown);
  for (std::size_t i = 0; i < frames; ++i) {
    auto src = episode.face.row_span(idx[i]);
    std::copy(src.begin(), src.end(), out.face.row_span(i).begin());
    if (idx[i] < episode.quality.size()) out.quality[i] = episode.quality[idx[i]];
  }
  return out;
}

std::vector<double> softmax_probabilities(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) z += (v = std::exp(v - mx));
  for (double& v : p) v /= z;
  return p;
}

std::vector<std::pair<std::size_t, double>> predict_topk(std::span<const double> logits, std::size_t k) {
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(std::min(k, order.size()));
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.emplace_back(i, logits[i]);
  return out;
}

}  // namespace famf
