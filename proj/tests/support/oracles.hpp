#pragma once

// Reference implementations used only by the tests. Plain nested vectors and
// explicit loops, no shared code with the library beyond Tensor conversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "famf/tensor.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from(const famf::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline famf::Tensor to(const Mat& m) {
  famf::Tensor t = famf::Tensor::zeros(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) t(r, c) = m[r][c];
  return t;
}

inline famf::Tensor gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  famf::Tensor t = famf::Tensor::zeros(rows, cols);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// alpha[i][k] = exp(a_k . x_i + b_k) / sum_k' exp(a_k' . x_i + b_k')
inline Mat assignment(const Mat& x, const Mat& a, const Mat& b) {
  const std::size_t n = x.size(), kk = a.size(), d = x[0].size();
  Mat alpha(n, std::vector<double>(kk));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logit(kk);
    for (std::size_t k = 0; k < kk; ++k) {
      double s = b[0][k];
      for (std::size_t j = 0; j < d; ++j) s += a[k][j] * x[i][j];
      logit[k] = s;
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (std::size_t k = 0; k < kk; ++k) z += std::exp(logit[k] - mx);
    for (std::size_t k = 0; k < kk; ++k) alpha[i][k] = std::exp(logit[k] - mx) / z;
  }
  return alpha;
}

// V[j][k] = w_k * sum_i alpha[i][k] * (x[i][j] - c[k][j]) for k < keep.
inline Mat weighted_vlad(const Mat& x, const Mat& a, const Mat& b, const Mat& c, const std::vector<double>& w,
                         std::size_t keep) {
  const Mat alpha = assignment(x, a, b);
  const std::size_t d = x[0].size();
  Mat v(d, std::vector<double>(keep, 0.0));
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < keep; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += alpha[i][k] * (x[i][j] - c[k][j]);
      v[j][k] = w[k] * s;
    }
  return v;
}

inline Mat netvlad(const Mat& x, const Mat& a, const Mat& b, const Mat& c) {
  return weighted_vlad(x, a, b, c, std::vector<double>(c.size(), 1.0), c.size());
}

inline Mat ghostvlad(const Mat& x, const Mat& a, const Mat& b, const Mat& c, std::size_t clusters) {
  return weighted_vlad(x, a, b, c, std::vector<double>(c.size(), 1.0), clusters);
}

inline std::vector<double> phi(const Mat& c, const Mat& phi_w, double phi_b, std::size_t clusters) {
  std::vector<double> out(clusters);
  for (std::size_t k = 0; k < clusters; ++k) {
    double s = phi_b;
    for (std::size_t j = 0; j < c[k].size(); ++j) s += phi_w[0][j] * c[k][j];
    out[k] = 1.0 / (1.0 + std::exp(-s));
  }
  return out;
}

inline Mat attention_vlad(const Mat& x, const Mat& a, const Mat& b, const Mat& c, const Mat& phi_w, double phi_b,
                          std::size_t clusters) {
  return weighted_vlad(x, a, b, c, phi(c, phi_w, phi_b, clusters), clusters);
}

// Y = A^T X with A[j][i] = softmax_i (x'_j . x'_i), x' = projections applied in order.
inline Mat fused(const Mat& x, const std::vector<Mat>& projections) {
  Mat p = x;
  for (const Mat& w : projections) {
    Mat next(p.size(), std::vector<double>(w.size(), 0.0));
    for (std::size_t r = 0; r < p.size(); ++r)
      for (std::size_t o = 0; o < w.size(); ++o)
        for (std::size_t i = 0; i < w[o].size(); ++i) next[r][o] += p[r][i] * w[o][i];
    p = next;
  }
  const std::size_t rr = x.size(), d = x[0].size();
  Mat att(rr, std::vector<double>(rr));
  for (std::size_t j = 0; j < rr; ++j) {
    std::vector<double> z(rr);
    for (std::size_t i = 0; i < rr; ++i) {
      double s = 0.0;
      for (std::size_t h = 0; h < p[j].size(); ++h) s += p[j][h] * p[i][h];
      z[i] = s;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double tot = 0.0;
    for (double v : z) tot += std::exp(v - mx);
    for (std::size_t i = 0; i < rr; ++i) att[j][i] = std::exp(z[i] - mx) / tot;
  }
  Mat y(rr, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < rr; ++i)
    for (std::size_t j = 0; j < rr; ++j)
      for (std::size_t c = 0; c < d; ++c) y[i][c] += att[j][i] * x[j][c];
  return y;
}

inline Mat mlma(const Mat& x, const Mat& w_f1, const Mat& w_f2) { return fused(x, {w_f2, w_f1}); }
inline Mat mma(const Mat& x, const Mat& w_f2) { return fused(x, {w_f2}); }

// AP by enumerating every prefix of the ranked list and recounting hits from
// scratch: sum over ranks r <= cutoff holding a positive of hits(1..r) / r,
// divided by m.
inline double average_precision(const std::vector<std::uint64_t>& ranked, const std::set<std::uint64_t>& positives,
                                std::size_t m, std::size_t cutoff) {
  double total = 0.0;
  const std::size_t depth = std::min(cutoff, ranked.size());
  for (std::size_t r = 1; r <= depth; ++r) {
    if (!positives.contains(ranked[r - 1])) continue;
    std::size_t hits = 0;
    for (std::size_t q = 0; q < r; ++q) hits += positives.contains(ranked[q]) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(r);
  }
  return total / static_cast<double>(m);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b[r][c]));
  return worst;
}

}  // namespace oracle
