#pragma once

// Differentiable primitives. All operands are rank-2; binary elementwise ops
// broadcast the right operand when it is 1xC, Rx1 or 1x1.

#include <cstddef>
#include <span>
#include <vector>

#include "famf/autodiff.hpp"

namespace famf::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

// axis 0 reduces rows (result 1xC); axis 1 reduces columns (result Rx1).
Var sum(Var a, int axis);
Var mean(Var a, int axis);
Var sum_all(Var a);

Var softmax(Var a, int axis);
Var sigmoid(Var a);
Var relu(Var a);

// Mean over the batch of -log softmax(logits)[label]. Result is 1x1.
Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels);

Var gather_rows(Var a, std::span<const std::size_t> rows);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var a, std::size_t rows, std::size_t cols);

// x / sqrt(sum(x^2) + eps), over the whole tensor or per row.
Var l2_normalize(Var a, double eps = 1e-12);
Var l2_normalize_rows(Var a, double eps = 1e-12);

enum class BatchNormMode { kTrain, kEval };

struct BatchNormState {
  Tensor* running_mean;  // 1xF
  Tensor* running_var;   // 1xF
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-feature standardization over the batch (rows) with learned scale and
// shift. Train mode requires at least two rows and updates the running
// statistics in place; eval mode reads them.
Var batchnorm(Var x, Var gamma, Var beta, BatchNormState state, BatchNormMode mode);

}  // namespace famf::ops
