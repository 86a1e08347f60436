#include "famf/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "famf/ops.hpp"

namespace famf::aggregation {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNetVlad: return "netvlad";
    case Variant::kGhostVlad: return "ghostvlad";
    case Variant::kAttentionVlad: return "attentionvlad";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "netvlad") return Variant::kNetVlad;
  if (s == "ghostvlad") return Variant::kGhostVlad;
  if (s == "attentionvlad") return Variant::kAttentionVlad;
  throw std::invalid_argument("unknown aggregation variant '" + s + "'");
}

std::string to_string(PhiActivation a) { return a == PhiActivation::kSigmoid ? "sigmoid" : "identity"; }

PhiActivation phi_activation_from_string(const std::string& s) {
  if (s == "sigmoid") return PhiActivation::kSigmoid;
  if (s == "identity") return PhiActivation::kIdentity;
  throw std::invalid_argument("unknown phi activation '" + s + "'");
}

void AggregationParams::validate() const {
  const std::size_t kt = total_clusters(), d = dim();
  if (clusters < 1) throw DimensionError("aggregation needs at least one cluster");
  auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const char* name) {
    if (t.rank() != 2 || t.rows() != r || t.cols() != c) {
      throw DimensionError(std::string("aggregation parameter ") + name + " has shape " +
                           shape_string(t.shape()) + ", expected (" + std::to_string(r) + "x" +
                           std::to_string(c) + ")");
    }
    if (!t.all_finite()) throw NumericError(std::string("aggregation parameter ") + name + " is not finite");
  };
  expect(a, kt, d, "a");
  expect(b, 1, kt, "b");
  expect(c, kt, d, "c");
  expect(phi_w, 1, d, "phi_w");
  expect(phi_b, 1, 1, "phi_b");
}

AggregationParams init_params(std::size_t dim, std::size_t clusters, std::size_t ghosts,
                              double sigma, std::uint64_t seed) {
  AggregationParams p;
  p.clusters = clusters;
  p.ghosts = ghosts;
  const std::size_t kt = clusters + ghosts;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  p.c = Tensor::zeros(kt, dim);
  for (double& v : p.c.data()) v = normal(rng);
  p.a = Tensor::zeros(kt, dim);
  p.b = Tensor::zeros(1, kt);
  for (std::size_t k = 0; k < kt; ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      p.a(k, j) = 2.0 * sigma * p.c(k, j);
      sq += p.c(k, j) * p.c(k, j);
    }
    p.b[k] = -sigma * sq;
  }
  p.phi_w = Tensor::zeros(1, dim);
  p.phi_b = Tensor::zeros(1, 1);
  return p;
}

AggregationVars bind(Tape& tape, const AggregationParams& params, bool requires_grad) {
  params.validate();
  auto leaf = [&](const Tensor& t) { return requires_grad ? tape.variable(t) : tape.constant(t); };
  return {leaf(params.a), leaf(params.b), leaf(params.c), leaf(params.phi_w), leaf(params.phi_b),
          params.clusters, params.ghosts};
}

namespace {

void check_input(Var x, const AggregationVars& p) {
  if (x.value().rank() != 2 || x.rows() == 0) {
    throw EmptyInputError("aggregation requires at least one frame");
  }
  if (x.cols() != p.c.cols()) {
    throw DimensionError("aggregation input has dimension " + std::to_string(x.cols()) +
                         ", parameters expect " + std::to_string(p.c.cols()));
  }
}

// Unweighted residual sums, one row per assigned cluster: (K+G) x D.
Var residual_sums(Var x, const AggregationVars& p) {
  Var alpha = soft_assign(x, p);
  Var weighted = ops::matmul(ops::transpose(alpha), x);            // (K+G) x D
  Var mass = ops::transpose(ops::sum(alpha, 0));                  // (K+G) x 1
  return ops::sub(weighted, ops::mul(p.c, mass));
}

std::vector<std::size_t> leading(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

Var soft_assign(Var x, const AggregationVars& p) {
  check_input(x, p);
  Var logits = ops::add(ops::matmul(x, ops::transpose(p.a)), p.b);
  return ops::softmax(logits, 1);
}

Var cluster_attention(const AggregationVars& p, PhiActivation activation) {
  Var c = p.c;
  if (p.ghosts > 0) {
    auto idx = leading(p.clusters);
    c = ops::gather_rows(c, idx);
  }
  Var pre = ops::add(ops::matmul(c, ops::transpose(p.phi_w)), p.phi_b);  // K x 1
  return activation == PhiActivation::kSigmoid ? ops::sigmoid(pre) : pre;
}

Var netvlad(Var x, const AggregationVars& p) {
  return ops::transpose(residual_sums(x, p));
}

Var attention_vlad(Var x, const AggregationVars& p, const AttentionOptions& options) {
  Var residual = residual_sums(x, p);
  const std::size_t kt = p.clusters + p.ghosts;
  Var phi;
  if (options.phi_override) {
    if (options.phi_override->size() != kt) {
      throw DimensionError("phi override has " + std::to_string(options.phi_override->size()) +
                           " weights for " + std::to_string(kt) + " clusters");
    }
    phi = x.tape().constant(Tensor({kt, 1}, *options.phi_override));
  } else {
    if (p.ghosts != 0) throw DimensionError("learned attention weights do not cover ghost clusters");
    phi = cluster_attention(p, options.activation);
  }
  return ops::transpose(ops::mul(residual, phi));
}

Var ghost_vlad(Var x, const AggregationVars& p) {
  Var residual = residual_sums(x, p);
  if (p.ghosts == 0) return ops::transpose(residual);
  auto keep = leading(p.clusters);
  return ops::transpose(ops::gather_rows(residual, keep));
}

Tensor soft_assign(const Tensor& x, const AggregationParams& p) {
  Tape tape;
  return soft_assign(tape.constant(x), bind(tape, p, false)).value();
}

Tensor netvlad(const Tensor& x, const AggregationParams& p) {
  Tape tape;
  return netvlad(tape.constant(x), bind(tape, p, false)).value();
}

Tensor attention_vlad(const Tensor& x, const AggregationParams& p, const AttentionOptions& options) {
  Tape tape;
  return attention_vlad(tape.constant(x), bind(tape, p, false), options).value();
}

Tensor ghost_vlad(const Tensor& x, const AggregationParams& p) {
  Tape tape;
  return ghost_vlad(tape.constant(x), bind(tape, p, false)).value();
}

std::vector<double> frame_weight_report(const Tensor& x, const AggregationParams& p,
                                        const AttentionOptions& options) {
  Tape tape;
  AggregationVars vars = bind(tape, p, false);
  Var xv = tape.constant(x);
  const Tensor alpha = soft_assign(xv, vars).value();
  std::vector<double> phi;
  if (options.phi_override) {
    phi = *options.phi_override;
  } else {
    const Tensor att = cluster_attention(vars, options.activation).value();
    phi.assign(att.data().begin(), att.data().end());
    phi.resize(p.total_clusters(), 0.0);  // ghosts contribute nothing
  }
  if (phi.size() != p.total_clusters()) throw DimensionError("phi override length mismatch");
  const double top = *std::max_element(phi.begin(), phi.end());
  std::vector<double> weights(x.rows(), 0.0);
  if (top <= 0.0) return weights;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double w = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) w += phi[k] * alpha(i, k);
    weights[i] = std::clamp(w / top, 0.0, 1.0);
  }
  return weights;
}

}  // namespace famf::aggregation
