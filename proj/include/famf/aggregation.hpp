#pragma once

// Frame-feature aggregation: NetVLAD, GhostVLAD and AttentionVLAD.
//
// All three map an N x D set of frame features to a D x K template V with
//   V(j,k) = w_k * sum_i alpha_k(x_i) * (x_i(j) - c_k(j)),
//   alpha_k(x_i) = softmax_k(a_k . x_i + b_k).
// NetVLAD uses w_k = 1. AttentionVLAD uses a learned per-cluster weight
// w_k = phi(c_k) = squash(w_phi . c_k + b_phi). GhostVLAD assigns over K + G
// clusters and drops the G ghost columns, i.e. w = [1 x K, 0 x G].

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "famf/autodiff.hpp"

namespace famf::aggregation {

enum class Variant { kNetVlad, kGhostVlad, kAttentionVlad };
enum class PhiActivation { kSigmoid, kIdentity };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(PhiActivation a);
PhiActivation phi_activation_from_string(const std::string& s);

class EmptyInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Trainable state of one aggregation layer. `a` and `c` hold one row per
// cluster (ghosts last), `b` is 1 x clusters, `phi_w` is 1 x D, `phi_b` 1 x 1.
struct AggregationParams {
  std::size_t clusters = 0;  // K
  std::size_t ghosts = 0;    // G
  Tensor a, b, c, phi_w, phi_b;

  std::size_t dim() const { return c.cols(); }
  std::size_t total_clusters() const { return clusters + ghosts; }
  void validate() const;
};

// Anchors c_k ~ N(0, 1/D); a_k = 2 sigma c_k; b_k = -sigma |c_k|^2; phi zero.
AggregationParams init_params(std::size_t dim, std::size_t clusters, std::size_t ghosts,
                              double sigma, std::uint64_t seed);

// The same parameters bound to a tape.
struct AggregationVars {
  Var a, b, c, phi_w, phi_b;
  std::size_t clusters = 0;
  std::size_t ghosts = 0;
};

AggregationVars bind(Tape& tape, const AggregationParams& params, bool requires_grad);

struct AttentionOptions {
  PhiActivation activation = PhiActivation::kSigmoid;
  // Replaces phi(c_k) with fixed weights, one per assigned cluster.
  std::optional<std::vector<double>> phi_override;
};

// N x (K+G) soft-assignment, rows sum to 1.
Var soft_assign(Var x, const AggregationVars& p);

// Cluster attention weights phi(c_k) as a K x 1 column (ghosts excluded).
Var cluster_attention(const AggregationVars& p, PhiActivation activation);

// Each returns a D x K template. `x` is N x D with N >= 1.
Var netvlad(Var x, const AggregationVars& p);
Var attention_vlad(Var x, const AggregationVars& p, const AttentionOptions& options = {});
Var ghost_vlad(Var x, const AggregationVars& p);

// Tensor-level conveniences for inspection and bindings.
Tensor soft_assign(const Tensor& x, const AggregationParams& p);
Tensor netvlad(const Tensor& x, const AggregationParams& p);
Tensor attention_vlad(const Tensor& x, const AggregationParams& p, const AttentionOptions& options = {});
Tensor ghost_vlad(const Tensor& x, const AggregationParams& p);

// Per-frame effective weight
//   w_i = sum_k phi(c_k) alpha_k(x_i) / max_k phi(c_k)   in [0, 1].
// Uniform phi gives 1 for every frame; a frame fully assigned to a phi = 0
// cluster gives 0.
std::vector<double> frame_weight_report(const Tensor& x, const AggregationParams& p,
                                        const AttentionOptions& options = {});

}  // namespace famf::aggregation
