#include "famf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace famf::ops {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using MapM = Eigen::Map<RowMajor>;

MapC view(const Tensor& t) { return MapC(t.data().data(), t.rows(), t.cols()); }
MapC view(std::span<const double> s, std::size_t r, std::size_t c) { return MapC(s.data(), r, c); }
MapM view(std::span<double> s, std::size_t r, std::size_t c) { return MapM(s.data(), r, c); }

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_string(t.shape()));
  }
}

// Maps an index of the full left operand to the broadcast right operand.
struct Broadcast {
  std::size_t rows, cols, brows, bcols;
  std::size_t operator()(std::size_t i, std::size_t j) const {
    return (brows == 1 ? 0 : i) * bcols + (bcols == 1 ? 0 : j);
  }
};

Broadcast broadcast_of(const Tensor& a, const Tensor& b, const char* op) {
  require_rank2(a, op);
  require_rank2(b, op);
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) +
                         " onto " + shape_string(a.shape()));
  }
  return {a.rows(), a.cols(), b.rows(), b.cols()};
}

template <typename F>
Var elementwise_binary(Var a, Var b, const char* name, F f, int kind) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_of(av, bv, name);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < bc.rows; ++i)
    for (std::size_t j = 0; j < bc.cols; ++j) out(i, j) = f(av(i, j), bv[bc(i, j)]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, bc, kind](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < bc.rows; ++i)
        for (std::size_t j = 0; j < bc.cols; ++j) {
          const std::size_t k = i * bc.cols + j;
          ga[k] += kind == 2 ? g[k] * bv[bc(i, j)] : g[k];
        }
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < bc.rows; ++i)
        for (std::size_t j = 0; j < bc.cols; ++j) {
          const std::size_t k = i * bc.cols + j;
          const double d = kind == 0 ? g[k] : kind == 1 ? -g[k] : g[k] * av(i, j);
          gb[bc(i, j)] += d;
        }
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  view(out.data(), m, n).noalias() = view(av) * view(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    auto g = view(t.grad(self), m, n);
    if (t.requires_grad(ia)) view(t.grad_buffer(ia), m, k).noalias() += g * view(t.value(ib)).transpose();
    if (t.requires_grad(ib)) view(t.grad_buffer(ib), k, n).noalias() += view(t.value(ia)).transpose() * g;
  });
}

Var transpose(Var a) {
  require_rank2(a.value(), "transpose");
  const std::size_t r = a.rows(), c = a.cols(), ia = a.id();
  return a.tape().record(a.value().transposed(), {a}, [ia, r, c](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(Var a, Var b) {
  return elementwise_binary(a, b, "add", [](double x, double y) { return x + y; }, 0);
}

Var sub(Var a, Var b) {
  return elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; }, 1);
}

Var mul(Var a, Var b) {
  return elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; }, 2);
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += s * g[k];
  });
}

Var sum(Var a, int axis) {
  const Tensor& av = a.value();
  require_rank2(av, "sum");
  if (axis != 0 && axis != 1) throw DimensionError("sum: axis must be 0 or 1");
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = axis == 0 ? Tensor::zeros(1, c) : Tensor::zeros(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, r, c, axis](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[axis == 0 ? j : i];
  });
}

Var mean(Var a, int axis) {
  Var s = sum(a, axis);
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  return scale(s, 1.0 / static_cast<double>(n));
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::full(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(ia)) v += g;
  });
}

Var softmax(Var a, int axis) {
  const Tensor& av = a.value();
  require_rank2(av, "softmax");
  if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  const std::size_t r = av.rows(), c = av.cols();
  if ((axis == 1 ? c : r) == 0) throw DimensionError("softmax over an empty axis");
  // Lines are rows for axis 1 and columns for axis 0.
  const std::size_t lines = axis == 1 ? r : c, len = axis == 1 ? c : r;
  auto at = [axis, c](std::size_t line, std::size_t k) {
    return axis == 1 ? line * c + k : k * c + line;
  };
  Tensor out(av.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, av[at(l, k)]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += (out[at(l, k)] = std::exp(av[at(l, k)] - mx));
    for (std::size_t k = 0; k < len; ++k) out[at(l, k)] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, lines, len, at](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t l = 0; l < lines; ++l) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += g[at(l, k)] * y[at(l, k)];
      for (std::size_t k = 0; k < len; ++k) ga[at(l, k)] += y[at(l, k)] * (g[at(l, k)] - dot);
    }
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k] * (1.0 - y[k]);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& x = t.value(ia);
    auto ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += x[k] > 0 ? g[k] : 0.0;
  });
}

Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  require_rank2(z, "cross_entropy_with_logits");
  const std::size_t b = z.rows(), c = z.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(b) + " rows");
  }
  if (b == 0 || c == 0) throw DimensionError("cross_entropy_with_logits: empty logits");
  Tensor prob(z.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) throw DimensionError("cross_entropy_with_logits: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, z(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (prob(i, j) = std::exp(z(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) prob(i, j) /= s;
    loss += (mx + std::log(s)) - z(i, labels[i]);
  }
  loss /= static_cast<double>(b);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t iz = logits.id();
  return logits.tape().record(
      Tensor::full(1, 1, loss), {logits},
      [iz, prob = std::move(prob), lab = std::move(lab), b, c](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(b);
        auto gz = t.grad_buffer(iz);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gz[i * c + j] += g * (prob(i, j) - (j == lab[i] ? 1.0 : 0.0));
      });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  require_rank2(av, "gather_rows");
  const std::size_t c = av.cols();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(av.row_span(rows[i]).begin(), c, out.row_span(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx), c](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g[i * c + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_rows");
    require_same_tape(parts.front(), p);
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
  }
  Tensor out({r, c});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.value().size();
  }
  return parts.front().tape().record(
      std::move(out), parts, [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          auto gp = t.grad_buffer(ids[p]);
          for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += g[offsets[p] + k];
        }
      });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  const std::size_t ia = a.id();
  return a.tape().record(a.value().reshaped({rows, cols}), {a}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
  });
}

namespace {

// Normalizes `n` contiguous blocks of length `len`.
Var blockwise_l2(Var a, std::size_t blocks, std::size_t len, double eps) {
  Tensor out = a.value();
  std::vector<double> norms(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += out[b * len + k] * out[b * len + k];
    norms[b] = std::sqrt(s + eps);
    for (std::size_t k = 0; k < len; ++k) out[b * len + k] /= norms[b];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia, blocks, len, norms = std::move(norms)](Tape& t, std::size_t self) {
                           auto g = t.grad(self);
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_buffer(ia);
                           for (std::size_t b = 0; b < blocks; ++b) {
                             double dot = 0.0;
                             for (std::size_t k = 0; k < len; ++k) dot += g[b * len + k] * y[b * len + k];
                             for (std::size_t k = 0; k < len; ++k) {
                               const std::size_t i = b * len + k;
                               ga[i] += (g[i] - y[i] * dot) / norms[b];
                             }
                           }
                         });
}

}  // namespace

Var l2_normalize(Var a, double eps) { return blockwise_l2(a, 1, a.value().size(), eps); }

Var l2_normalize_rows(Var a, double eps) {
  require_rank2(a.value(), "l2_normalize_rows");
  return blockwise_l2(a, a.rows(), a.cols(), eps);
}

Var batchnorm(Var x, Var gamma, Var beta, BatchNormState state, BatchNormMode mode) {
  const Tensor& xv = x.value();
  require_rank2(xv, "batchnorm");
  const std::size_t b = xv.rows(), f = xv.cols();
  for (const Tensor* t : {&gamma.value(), &beta.value(), static_cast<const Tensor*>(state.running_mean),
                          static_cast<const Tensor*>(state.running_var)}) {
    if (t->size() != f) throw DimensionError("batchnorm: parameter width does not match features");
  }
  std::vector<double> mu(f), inv_std(f);
  if (mode == BatchNormMode::kTrain) {
    if (b < 2) throw DimensionError("batchnorm: train mode needs a batch of at least 2, got " + std::to_string(b));
    for (std::size_t j = 0; j < f; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < b; ++i) m += xv(i, j);
      m /= static_cast<double>(b);
      double v = 0.0;
      for (std::size_t i = 0; i < b; ++i) v += (xv(i, j) - m) * (xv(i, j) - m);
      const double biased = v / static_cast<double>(b);
      const double unbiased = v / static_cast<double>(b - 1);
      mu[j] = m;
      inv_std[j] = 1.0 / std::sqrt(biased + state.eps);
      (*state.running_mean)[j] = (1.0 - state.momentum) * (*state.running_mean)[j] + state.momentum * m;
      (*state.running_var)[j] = (1.0 - state.momentum) * (*state.running_var)[j] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      mu[j] = (*state.running_mean)[j];
      inv_std[j] = 1.0 / std::sqrt((*state.running_var)[j] + state.eps);
    }
  }
  Tensor xhat(xv.shape()), out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      xhat(i, j) = (xv(i, j) - mu[j]) * inv_std[j];
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool train = mode == BatchNormMode::kTrain;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, b, f, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          auto gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) gg[j] += g[i * f + j] * xhat(i, j);
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) gb[j] += g[i * f + j];
        }
        if (!t.requires_grad(ix)) return;
        auto gx = t.grad_buffer(ix);
        const double n = static_cast<double>(b);
        for (std::size_t j = 0; j < f; ++j) {
          if (!train) {
            for (std::size_t i = 0; i < b; ++i) gx[i * f + j] += g[i * f + j] * gv[j] * inv_std[j];
            continue;
          }
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t i = 0; i < b; ++i) {
            const double d = g[i * f + j] * gv[j];
            sum_d += d;
            sum_dx += d * xhat(i, j);
          }
          for (std::size_t i = 0; i < b; ++i) {
            const double d = g[i * f + j] * gv[j];
            gx[i * f + j] += inv_std[j] / n * (n * d - sum_d - xhat(i, j) * sum_dx);
          }
        }
      });
}

}  // namespace famf::ops
