#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "famf/fusion.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using famf::Tape;
using famf::Tensor;
using famf::Var;
namespace fusion = famf::fusion;

namespace {

fusion::FusionParams random_params(std::size_t d, std::size_t h1, std::size_t h2, std::mt19937_64& rng,
                                   double sd = 1.0) {
  return {oracle::gaussian(h2, h1, rng, sd), oracle::gaussian(h1, d, rng, sd)};
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor y = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(perm[i], j);
  return y;
}

}  // namespace

TEST_CASE("mlma") {
  std::mt19937_64 rng(1);
  SUBCASE("one row is the identity") {
    const auto p = random_params(8, 3, 2, rng);
    const Tensor x = oracle::gaussian(1, 8, rng);
    CHECK(fusion::mlma(x, p) == x);
  }
  SUBCASE("two identical rows average to themselves") {
    const auto p = random_params(8, 3, 2, rng);
    const Tensor r = oracle::gaussian(1, 8, rng);
    Tensor x = Tensor::zeros(2, 8);
    for (std::size_t j = 0; j < 8; ++j) x(0, j) = x(1, j) = r[j];
    const Tensor y = fusion::mlma(x, p);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK(y(i, j) == doctest::Approx(r[j]).epsilon(1e-14));
  }
  SUBCASE("matches loop oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto p = random_params(8, 3, 2, rng, 0.5);
      const Tensor x = oracle::gaussian(4, 8, rng);
      const auto expect = oracle::mlma(oracle::from(x), oracle::from(p.w_f1), oracle::from(p.w_f2));
      CHECK(oracle::max_abs_diff(oracle::from(fusion::mlma(x, p)), expect) <= 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    const auto p = random_params(8, 3, 2, rng);
    CHECK_THROWS_AS(fusion::mlma(oracle::gaussian(3, 7, rng), p), famf::DimensionError);
    fusion::FusionParams bad{oracle::gaussian(2, 4, rng), p.w_f2};
    CHECK_THROWS_AS(fusion::mlma(oracle::gaussian(3, 8, rng), bad), famf::DimensionError);
  }
}

TEST_CASE("mma") {
  std::mt19937_64 rng(2);
  const auto p = random_params(6, 4, 2, rng, 0.5);
  SUBCASE("one row is the identity") {
    const Tensor x = oracle::gaussian(1, 6, rng);
    CHECK(fusion::mma(x, p) == x);
  }
  SUBCASE("equals mlma with an identity second projection") {
    const Tensor x = oracle::gaussian(5, 6, rng);
    fusion::FusionParams eye{Tensor::identity(4), p.w_f2};
    CHECK(famf::max_abs_diff(fusion::mma(x, p), fusion::mlma(x, eye)) <= 1e-12);
  }
  SUBCASE("matches loop oracle") {
    const Tensor x = oracle::gaussian(5, 6, rng);
    CHECK(oracle::max_abs_diff(oracle::from(fusion::mma(x, p)), oracle::mma(oracle::from(x), oracle::from(p.w_f2))) <=
          1e-12);
  }
}

TEST_CASE("concat") {
  std::mt19937_64 rng(3);
  const Tensor row = oracle::gaussian(1, 5, rng);
  CHECK(fusion::concat(row) == row);
  CHECK(fusion::concat(Tensor::from_rows({{1, 2}, {3, 4}})) == Tensor::row({1, 2, 3, 4}));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = oracle::gaussian(1 + trial % 4, 3 + trial, rng);
    CHECK(fusion::unflatten(fusion::concat(x), x.rows(), x.cols()) == x);
  }
  CHECK_THROWS_AS(fusion::unflatten(Tensor::row({1, 2, 3}), 2, 2), famf::DimensionError);
}

TEST_CASE("attention matrix report") {
  std::mt19937_64 rng(4);
  SUBCASE("identical rows give uniform weights") {
    const auto p = random_params(6, 4, 2, rng);
    const Tensor r = oracle::gaussian(1, 6, rng);
    Tensor x = Tensor::zeros(5, 6);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) x(i, j) = r[j];
    const Tensor m = fusion::attention_matrix_report(x, p, fusion::Variant::kMlma);
    for (double v : m.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
  }
  SUBCASE("orthogonal large rows approach the identity") {
    fusion::FusionParams p{Tensor::identity(4), Tensor::identity(4)};
    Tensor x = Tensor::identity(4);
    for (auto& v : x.data()) v *= 10.0;
    const Tensor m = fusion::attention_matrix_report(x, p, fusion::Variant::kMlma);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(m(i, j) - (i == j ? 1.0 : 0.0)) < 1e-40);
  }
  SUBCASE("columns sum to one and the report is A transposed") {
    const auto p = random_params(6, 4, 2, rng, 0.5);
    const Tensor x = oracle::gaussian(7, 6, rng);
    const Tensor m = fusion::attention_matrix_report(x, p, fusion::Variant::kMlma);
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 7; ++i) s += m(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    // Y_i = sum_j M[i][j] X_j.
    const Tensor y = fusion::mlma(x, p);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 6; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += m(i, j) * x(j, c);
        CHECK(std::abs(s - y(i, c)) <= 1e-12);
      }
  }
  SUBCASE("text report round trips") {
    const auto p = random_params(6, 4, 2, rng, 0.5);
    const Tensor x = oracle::gaussian(4, 6, rng);
    const Tensor m = fusion::attention_matrix_report(x, p, fusion::Variant::kMma);
    const std::vector<std::string> tags = {"face0", "face1", "audio", "body"};
    const auto parsed = fusion::parse_attention_report(fusion::format_attention_report(m, tags));
    CHECK(parsed.tags == tags);
    CHECK(famf::max_abs_diff(parsed.matrix, m) == 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += parsed.matrix(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    CHECK_THROWS(fusion::parse_attention_report("face0\t1\n"));
    CHECK_THROWS_AS(fusion::format_attention_report(m, {"a"}), famf::DimensionError);
  }
  SUBCASE("concat has no matrix") {
    const auto p = random_params(6, 4, 2, rng);
    CHECK_THROWS_AS(fusion::attention_matrix_report(oracle::gaussian(2, 6, rng), p, fusion::Variant::kConcat),
                    std::invalid_argument);
  }
}

TEST_CASE("row permutation equivariance") {
  std::mt19937_64 rng(5);
  const auto p = random_params(6, 4, 3, rng, 0.5);
  const Tensor x = oracle::gaussian(6, 6, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(famf::max_abs_diff(fusion::mlma(permute_rows(x, perm), p), permute_rows(fusion::mlma(x, p), perm)) <= 1e-12);
  }
}

TEST_CASE("zero rows stay finite") {
  std::mt19937_64 rng(6);
  const auto p = random_params(6, 4, 3, rng);
  Tensor x = oracle::gaussian(4, 6, rng);
  for (std::size_t j = 0; j < 6; ++j) x(2, j) = 0.0;
  CHECK(fusion::mlma(x, p).all_finite());
  CHECK(fusion::mma(x, p).all_finite());
  CHECK(fusion::mlma(Tensor::zeros(3, 6), p).all_finite());
}

TEST_CASE("bundle and width validation") {
  fusion::ModalBundle b{Tensor::zeros(3, 4), 2, 1, {"face0", "face1", "audio"}};
  CHECK_NOTHROW(b.validate());
  b.k1 = 0;
  b.k2 = 3;
  CHECK_THROWS_AS(b.validate(), famf::DimensionError);
  b.k1 = 1;
  b.k2 = 1;
  CHECK_THROWS_AS(b.validate(), famf::DimensionError);

  CHECK_NOTHROW(fusion::init_params(16, 8, 4, 1));
  CHECK_THROWS_AS(fusion::init_params(16, 32, 4, 1), famf::DimensionError);
  CHECK_THROWS_AS(fusion::init_params(16, 8, 9, 1), famf::DimensionError);
  CHECK_THROWS_AS(fusion::init_params(16, 8, 0, 1), famf::DimensionError);
  const auto p = fusion::init_params(16, 8, 4, 1);
  CHECK(p.w_f1.shape() == famf::Shape{4, 8});
  CHECK(p.w_f2.shape() == famf::Shape{8, 16});
  CHECK(fusion::variant_from_string(fusion::to_string(fusion::Variant::kMlma)) == fusion::Variant::kMlma);
}

TEST_CASE("fusion gradients match finite differences") {
  for (std::uint64_t seed : {21, 22, 23}) {
    std::mt19937_64 rng(seed);
    const auto p = random_params(6, 4, 3, rng, 0.4);
    const Tensor x = oracle::gaussian(5, 6, rng);
    auto r = gradcheck::check(
        [&](Tape& t, const std::vector<Var>& v) { return gradcheck::project(t, fusion::mlma(v[0], {v[1], v[2]}), seed); },
        {x, p.w_f1, p.w_f2});
    CHECK(r.max_rel_err <= 1e-5);
    r = gradcheck::check(
        [&](Tape& t, const std::vector<Var>& v) { return gradcheck::project(t, fusion::mma(v[0], {v[1], v[2]}), seed); },
        {x, p.w_f1, p.w_f2});
    CHECK(r.max_rel_err <= 1e-5);
  }
}
