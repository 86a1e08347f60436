#pragma once

// Multi-modal fusion over a stacked modality matrix X with R = K1 + K2 rows.
//
// MLMA projects every row through two bias-free channel-reducing maps,
// X' = X W_F2^T W_F1^T (D -> hidden1 -> hidden2), forms the row Gram matrix
// Z = X' X'^T, and normalizes A[j, :] = softmax_i Z[j, i] so that each source
// row j distributes unit weight over the outputs. The fused rows are
// Y_i = sum_j A[j, i] X_j, i.e. Y = A^T X. MMA is the same with a single
// projection D -> hidden1.

#include <cstdint>
#include <string>
#include <vector>

#include "famf/autodiff.hpp"

namespace famf::fusion {

enum class Variant { kConcat, kMma, kMlma };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModalBundle {
  Tensor x;                        // R x D
  std::size_t k1 = 0;              // rows from frame aggregation
  std::size_t k2 = 0;              // rows from other modalities
  std::vector<std::string> tags;   // one per row

  void validate() const;
};

struct FusionParams {
  Tensor w_f1;  // hidden2 x hidden1 (unused by MMA)
  Tensor w_f2;  // hidden1 x D

  void validate(Variant variant, std::size_t dim) const;
};

// W ~ N(0, 1/fan_in). Enforces hidden2 <= hidden1 <= dim.
FusionParams init_params(std::size_t dim, std::size_t hidden1, std::size_t hidden2, std::uint64_t seed);

struct FusionVars {
  Var w_f1, w_f2;
};

FusionVars bind(Tape& tape, const FusionParams& params, bool requires_grad);

// R x R matrix A with rows summing to 1 (row = source j, column = output i).
Var attention_weights(Var x, const FusionVars& p, Variant variant);

Var mlma(Var x, const FusionVars& p);
Var mma(Var x, const FusionVars& p);
// 1 x (R*D) row-major flattening.
Var concat(Var x);

// Fused R x D matrix for MMA/MLMA; the input unchanged for concat.
Var fuse(Var x, const FusionVars& p, Variant variant);

Tensor mlma(const Tensor& x, const FusionParams& p);
Tensor mma(const Tensor& x, const FusionParams& p);
Tensor concat(const Tensor& x);
Tensor unflatten(const Tensor& flat, std::size_t rows, std::size_t dim);

// Report matrix M = A^T: row i lists the weights each source row j
// contributes to fused row i, so Y_i = sum_j M[i][j] X_j and every column
// sums to 1.
Tensor attention_matrix_report(const Tensor& x, const FusionParams& p, Variant variant);

// Tab-delimited grid with a header row of tags:
//   "#\t<tag_0>\t...\t<tag_{R-1}>"
//   "<tag_i>\t<M[i][0]>\t...\t<M[i][R-1]>"
// Values use 17 significant digits, so a parse reproduces them exactly.
std::string format_attention_report(const Tensor& matrix, const std::vector<std::string>& tags);

struct ParsedReport {
  std::vector<std::string> tags;
  Tensor matrix;
};
ParsedReport parse_attention_report(const std::string& text);

}  // namespace famf::fusion
