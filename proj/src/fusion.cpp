#include "famf/fusion.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "famf/ops.hpp"

namespace famf::fusion {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kConcat: return "concat";
    case Variant::kMma: return "mma";
    case Variant::kMlma: return "mlma";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "concat") return Variant::kConcat;
  if (s == "mma") return Variant::kMma;
  if (s == "mlma") return Variant::kMlma;
  throw std::invalid_argument("unknown fusion variant '" + s + "'");
}

void ModalBundle::validate() const {
  if (k1 < 1) throw DimensionError("modal bundle needs at least one aggregated row");
  if (x.rank() != 2 || x.rows() != k1 + k2) {
    throw DimensionError("modal bundle has " + std::to_string(x.rank() == 2 ? x.rows() : 0) +
                         " rows, expected K1 + K2 = " + std::to_string(k1 + k2));
  }
  if (!tags.empty() && tags.size() != x.rows()) throw DimensionError("modal bundle tag count mismatch");
  if (!x.all_finite()) throw NumericError("modal bundle contains non-finite values");
}

void FusionParams::validate(Variant variant, std::size_t dim) const {
  if (variant == Variant::kConcat) return;
  if (w_f2.rank() != 2 || w_f2.cols() != dim) {
    throw DimensionError("W_F2 has shape " + shape_string(w_f2.shape()) + ", expected hidden1 x " +
                         std::to_string(dim));
  }
  if (variant == Variant::kMlma && (w_f1.rank() != 2 || w_f1.cols() != w_f2.rows())) {
    throw DimensionError("W_F1 has shape " + shape_string(w_f1.shape()) + ", expected hidden2 x " +
                         std::to_string(w_f2.rows()));
  }
}

FusionParams init_params(std::size_t dim, std::size_t hidden1, std::size_t hidden2, std::uint64_t seed) {
  if (hidden1 == 0 || hidden2 == 0 || hidden2 > hidden1 || hidden1 > dim) {
    throw DimensionError("fusion widths must satisfy 0 < hidden2 <= hidden1 <= D, got hidden1=" +
                         std::to_string(hidden1) + " hidden2=" + std::to_string(hidden2) +
                         " D=" + std::to_string(dim));
  }
  std::mt19937_64 rng(seed);
  FusionParams p;
  p.w_f2 = Tensor::zeros(hidden1, dim);
  p.w_f1 = Tensor::zeros(hidden2, hidden1);
  std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (double& v : p.w_f2.data()) v = n2(rng);
  std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(hidden1)));
  for (double& v : p.w_f1.data()) v = n1(rng);
  return p;
}

FusionVars bind(Tape& tape, const FusionParams& params, bool requires_grad) {
  auto leaf = [&](const Tensor& t) { return requires_grad ? tape.variable(t) : tape.constant(t); };
  return {leaf(params.w_f1), leaf(params.w_f2)};
}

Var attention_weights(Var x, const FusionVars& p, Variant variant) {
  if (x.value().rank() != 2 || x.rows() == 0) throw DimensionError("fusion input has no rows");
  if (x.cols() != p.w_f2.cols()) {
    throw DimensionError("fusion input dimension " + std::to_string(x.cols()) +
                         " does not match W_F2 width " + std::to_string(p.w_f2.cols()));
  }
  Var proj = ops::matmul(x, ops::transpose(p.w_f2));
  if (variant == Variant::kMlma) proj = ops::matmul(proj, ops::transpose(p.w_f1));
  Var gram = ops::matmul(proj, ops::transpose(proj));
  return ops::softmax(gram, 1);
}

Var mlma(Var x, const FusionVars& p) {
  Var a = attention_weights(x, p, Variant::kMlma);
  return ops::matmul(ops::transpose(a), x);
}

Var mma(Var x, const FusionVars& p) {
  Var a = attention_weights(x, p, Variant::kMma);
  return ops::matmul(ops::transpose(a), x);
}

Var concat(Var x) { return ops::reshape(x, 1, x.value().size()); }

Var fuse(Var x, const FusionVars& p, Variant variant) {
  switch (variant) {
    case Variant::kMlma: return mlma(x, p);
    case Variant::kMma: return mma(x, p);
    case Variant::kConcat: return x;
  }
  return x;
}

Tensor mlma(const Tensor& x, const FusionParams& p) {
  p.validate(Variant::kMlma, x.cols());
  Tape tape;
  return mlma(tape.constant(x), bind(tape, p, false)).value();
}

Tensor mma(const Tensor& x, const FusionParams& p) {
  p.validate(Variant::kMma, x.cols());
  Tape tape;
  return mma(tape.constant(x), bind(tape, p, false)).value();
}

Tensor concat(const Tensor& x) { return x.reshaped({1, x.size()}); }

Tensor unflatten(const Tensor& flat, std::size_t rows, std::size_t dim) {
  if (flat.size() != rows * dim) throw DimensionError("unflatten: size does not match rows x dim");
  return flat.reshaped({rows, dim});
}

Tensor attention_matrix_report(const Tensor& x, const FusionParams& p, Variant variant) {
  if (variant == Variant::kConcat) {
    throw std::invalid_argument("concatenation fusion has no attention matrix");
  }
  p.validate(variant, x.cols());
  Tape tape;
  return attention_weights(tape.constant(x), bind(tape, p, false), variant).value().transposed();
}

std::string format_attention_report(const Tensor& matrix, const std::vector<std::string>& tags) {
  if (matrix.rows() != tags.size() || matrix.cols() != tags.size()) {
    throw DimensionError("attention report needs one tag per row and column");
  }
  std::ostringstream os;
  os << std::setprecision(17);
  os << '#';
  for (const auto& t : tags) os << '\t' << t;
  os << '\n';
  for (std::size_t i = 0; i < tags.size(); ++i) {
    os << tags[i];
    for (std::size_t j = 0; j < tags.size(); ++j) os << '\t' << matrix(i, j);
    os << '\n';
  }
  return os.str();
}

ParsedReport parse_attention_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ls(s);
    while (std::getline(ls, field, '\t')) out.push_back(field);
    return out;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("attention report is empty");
  auto header = split(line);
  if (header.empty() || header[0] != "#") throw std::invalid_argument("attention report header must start with '#'");
  ParsedReport r;
  r.tags.assign(header.begin() + 1, header.end());
  const std::size_t n = r.tags.size();
  r.matrix = Tensor::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::invalid_argument("attention report truncated at row " + std::to_string(i));
    auto fields = split(line);
    if (fields.size() != n + 1 || fields[0] != r.tags[i]) {
      throw std::invalid_argument("attention report row " + std::to_string(i) + " is malformed");
    }
    for (std::size_t j = 0; j < n; ++j) r.matrix(i, j) = std::stod(fields[j + 1]);
  }
  return r;
}

}  // namespace famf::fusion
