#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "famf/model.hpp"
#include "support/oracles.hpp"

using famf::FamfConfig;
using famf::FamfModel;
using famf::Tape;
using famf::Tensor;
namespace data = famf::data;

namespace {

FamfConfig tiny_config() {
  FamfConfig c;
  c.dim = 8;
  c.clusters = 2;
  c.num_classes = 5;
  c.hidden_dim = 16;
  c.fusion_hidden1 = 4;
  c.fusion_hidden2 = 2;
  c.frames = 6;
  return c;
}

data::Dataset tiny_data(std::uint64_t seed) {
  data::SynthSpec s;
  s.num_classes = 5;
  s.dim = 8;
  s.episodes_per_class = 2;
  s.frames_min = 3;
  s.frames_max = 7;
  s.seed = seed;
  return data::generate(s);
}

double batch_loss(FamfModel& model, std::span<const data::Episode* const> batch, const std::vector<std::size_t>& labels) {
  Tape tape;
  auto logits = model.forward(tape, batch, famf::BatchNormMode::kTrain);
  return famf::ops::cross_entropy_with_logits(logits, labels).value()[0];
}

}  // namespace

TEST_CASE("logit shape is fixed for any frame count") {
  FamfModel model(tiny_config(), 1);
  std::mt19937_64 rng(1);
  for (std::size_t n : {1, 24, 100}) {
    data::Episode ep;
    ep.face = oracle::gaussian(n, 8, rng);
    ep.audio = oracle::gaussian(1, 8, rng);
    CHECK(model.logits(ep).size() == 5);
  }
}

TEST_CASE("frame order does not change logits") {
  FamfModel model(tiny_config(), 2);
  std::mt19937_64 rng(2);
  data::Episode a;
  a.face = oracle::gaussian(24, 8, rng);
  a.audio = oracle::gaussian(1, 8, rng);
  a.body = oracle::gaussian(1, 8, rng);
  data::Episode b = a;
  std::vector<std::size_t> perm(24);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < 24; ++i)
    for (std::size_t j = 0; j < 8; ++j) b.face(i, j) = a.face(perm[i], j);
  const auto la = model.logits(a), lb = model.logits(b);
  for (std::size_t k = 0; k < la.size(); ++k) CHECK(std::abs(la[k] - lb[k]) <= 1e-9);
}

TEST_CASE("eval mode is idempotent and yields a probability vector") {
  FamfModel model(tiny_config(), 3);
  const auto ds = tiny_data(3);
  const auto first = model.logits(ds.episodes[0]);
  CHECK(model.logits(ds.episodes[0]) == first);
  const auto p = famf::softmax_probabilities(first);
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
  for (double v : p) CHECK(v > 0.0);
}

TEST_CASE("missing modalities enter fusion as zero rows") {
  FamfModel model(tiny_config(), 4);
  std::mt19937_64 rng(4);
  data::Episode ep;
  ep.face = oracle::gaussian(5, 8, rng);
  ep.body = oracle::gaussian(1, 8, rng);
  const auto b = model.bundle(ep);
  CHECK(b.x.rows() == 4);
  CHECK(b.k1 == 2);
  CHECK(b.k2 == 2);
  CHECK(b.tags == std::vector<std::string>{"face0", "face1", "audio", "body"});
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(b.x(2, j) == 0.0);
    CHECK(b.x(3, j) == (*ep.body)(0, j));
  }
  CHECK(std::isfinite(model.logits(ep)[0]));

  ep.audio = oracle::gaussian(1, 3, rng);
  CHECK_THROWS_AS(model.logits(ep), famf::DimensionError);
  ep.audio.reset();
  ep.face = oracle::gaussian(5, 7, rng);
  CHECK_THROWS_AS(model.logits(ep), famf::DimensionError);
}

TEST_CASE("parameter count matches closed form") {
  using AV = famf::aggregation::Variant;
  using FV = famf::fusion::Variant;
  for (auto av : {AV::kNetVlad, AV::kGhostVlad, AV::kAttentionVlad})
    for (auto fv : {FV::kConcat, FV::kMma, FV::kMlma})
      for (bool pooled : {false, true}) {
        auto c = tiny_config();
        c.aggregation = av;
        c.fusion = fv;
        c.pooled_face = pooled;
        FamfModel m(c, 5);
        CHECK(m.params().trainable_count() == c.expected_parameter_count());
      }
  // Hand count for the default tiny configuration.
  const std::size_t agg = 2 * 8 + 2 + 2 * 8 + 8 + 1;
  const std::size_t fus = 4 * 8 + 2 * 4;
  const std::size_t in = 4 * 8;
  const std::size_t cls = (in * 16 + 16 + 32) + (16 * 16 + 16 + 32) + (16 * 5 + 5);
  CHECK(tiny_config().expected_parameter_count() == agg + fus + cls);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.modalities = {data::Modality::kAudio};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.fusion_hidden1 = 9;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.clusters = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.modalities = {data::Modality::kFace, data::Modality::kAudio, data::Modality::kAudio};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("checkpointed parameters must match the configuration") {
  FamfModel a(tiny_config(), 6);
  CHECK_NOTHROW(FamfModel(tiny_config(), a.params()));
  auto bigger = tiny_config();
  bigger.hidden_dim = 17;
  CHECK_THROWS_AS(FamfModel(bigger, a.params()), famf::DimensionError);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    FamfModel model(tiny_config(), seed);
    const auto ds = tiny_data(seed + 10);
    std::vector<const data::Episode*> batch;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 4; ++i) {
      batch.push_back(&ds.episodes[i * 2 + 1]);
      labels.push_back(ds.episodes[i * 2 + 1].label);
    }
    model.params().zero_grad();
    {
      Tape tape;
      auto loss = famf::ops::cross_entropy_with_logits(model.forward(tape, batch, famf::BatchNormMode::kTrain), labels);
      tape.backward(loss);
    }
    // Two entries of every trainable tensor plus a 1% random sample overall.
    std::vector<std::pair<famf::Parameter*, std::size_t>> picks;
    std::mt19937_64 rng(seed);
    std::size_t total = 0;
    for (auto& [name, p] : model.params()) {
      if (!p.trainable) continue;
      total += p.value.size();
      picks.emplace_back(&p, rng() % p.value.size());
      picks.emplace_back(&p, rng() % p.value.size());
    }
    std::vector<famf::Parameter*> flat;
    for (auto& [name, p] : model.params())
      if (p.trainable)
        for (std::size_t i = 0; i < p.value.size(); ++i) flat.push_back(&p);
    for (std::size_t s = 0; s < total / 100 + 1; ++s) {
      famf::Parameter* p = flat[rng() % flat.size()];
      picks.emplace_back(p, rng() % p->value.size());
    }
    double worst = 0.0;
    const double h = 1e-5;
    for (auto [p, i] : picks) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = batch_loss(model, batch, labels);
      p->value[i] = orig - h;
      const double down = batch_loss(model, batch, labels);
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * h), analytic = p->grad[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
    }
    INFO("seed " << seed << " checked " << picks.size());
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("top-k prediction") {
  const std::vector<double> l = {0.1, 0.9, 0.5};
  const auto top = famf::predict_topk(l, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == std::pair<std::size_t, double>{1, 0.9});
  CHECK(top[1] == std::pair<std::size_t, double>{2, 0.5});

  const std::vector<double> flat(4, 0.3);
  const auto ties = famf::predict_topk(flat, 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(ties[i].first == i);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = coarse(rng) * 0.25;
    // Oracle: full sort of (−score, id) pairs.
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < v.size(); ++i) keyed.emplace_back(-v[i], i);
    std::sort(keyed.begin(), keyed.end());
    const auto got = famf::predict_topk(v, 7);
    REQUIRE(got.size() == 7);
    for (std::size_t r = 0; r < 7; ++r) CHECK(got[r].first == keyed[r].second);
  }
}

TEST_CASE("frame resampling keeps quality labels aligned") {
  const auto ds = tiny_data(7);
  const auto& ep = ds.episodes[3];
  const auto s = famf::with_sampled_frames(ep, 10, 5);
  CHECK(s.face.rows() == 10);
  CHECK(s.quality.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    bool found = false;
    for (std::size_t r = 0; r < ep.face.rows() && !found; ++r) {
      bool same = true;
      for (std::size_t j = 0; j < 8; ++j) same = same && s.face(i, j) == ep.face(r, j);
      found = same && s.quality[i] == ep.quality[r];
    }
    CHECK(found);
  }
}
