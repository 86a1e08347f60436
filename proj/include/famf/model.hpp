#pragma once

// The full pipeline: face frames -> frame aggregation -> modality bundle ->
// fusion -> three-layer MLP with batch normalization -> class logits.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "famf/aggregation.hpp"
#include "famf/autodiff.hpp"
#include "famf/data.hpp"
#include "famf/fusion.hpp"
#include "famf/ops.hpp"

namespace famf {

struct FamfConfig {
  std::size_t dim = 128;
  std::size_t clusters = 8;   // K
  std::size_t ghosts = 2;     // G, GhostVLAD only
  std::size_t frames = 24;    // N sampled per episode
  std::size_t num_classes = 50;
  std::size_t hidden_dim = 4096;
  std::size_t fusion_hidden1 = 128;
  std::size_t fusion_hidden2 = 32;
  aggregation::Variant aggregation = aggregation::Variant::kAttentionVlad;
  fusion::Variant fusion = fusion::Variant::kMlma;
  std::vector<data::Modality> modalities = {data::Modality::kFace, data::Modality::kAudio,
                                            data::Modality::kBody};
  aggregation::PhiActivation phi_activation = aggregation::PhiActivation::kSigmoid;
  bool intra_normalize = false;
  bool global_normalize = true;
  bool pooled_face = false;
  double assign_sigma = 1.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  std::size_t face_rows() const { return pooled_face ? 1 : clusters; }
  std::size_t fusion_rows() const { return face_rows() + modalities.size() - 1; }
  std::size_t classifier_input() const { return fusion_rows() * dim; }
  std::vector<std::string> row_tags() const;
  // Closed-form trainable parameter count; running statistics excluded.
  std::size_t expected_parameter_count() const;
};

using ops::BatchNormMode;

class FamfModel {
 public:
  FamfModel(FamfConfig config, std::uint64_t seed);
  // Adopts parameters from a checkpoint; throws if any shape disagrees.
  FamfModel(FamfConfig config, ParameterStore params);

  const FamfConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // B x num_classes logits. Train mode needs B >= 2 and updates batchnorm
  // running statistics. Episodes are used as given (no frame sampling).
  Var forward(Tape& tape, std::span<const data::Episode* const> batch, BatchNormMode mode);

  // Eval-mode logits for one episode.
  std::vector<double> logits(const data::Episode& episode);

  // Eval-mode modality bundle fed to fusion for one episode.
  fusion::ModalBundle bundle(const data::Episode& episode);

  aggregation::AggregationParams aggregation_params() const;
  fusion::FusionParams fusion_params() const;

 private:
  void init(std::uint64_t seed);
  Var bundle_rows(Tape& tape, const data::Episode& episode, const aggregation::AggregationVars& agg);
  aggregation::AggregationVars bind_aggregation(Tape& tape);

  FamfConfig config_;
  ParameterStore params_;
};

// Episode copy with its face frames resampled to `frames` rows.
data::Episode with_sampled_frames(const data::Episode& episode, std::size_t frames, std::uint64_t seed);

std::vector<double> softmax_probabilities(std::span<const double> logits);

// Descending score, ties by ascending class id.
std::vector<std::pair<std::size_t, double>> predict_topk(std::span<const double> logits, std::size_t k);

}  // namespace famf
