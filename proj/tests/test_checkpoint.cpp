#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "famf/binary_io.hpp"
#include "famf/checkpoint.hpp"
#include "famf/config.hpp"
#include "famf/model.hpp"
#include "support/oracles.hpp"

using famf::ParameterStore;
using famf::Tensor;
using famf::io::ParseError;

namespace {

ParameterStore small_store() {
  ParameterStore s;
  s.add("b", Tensor::from_rows({{1.5, -2.0}, {0.0, 3.25}}), famf::ParamGroup::kRest);
  s.add("a", Tensor::row({0.1, 0.2, 0.3}), famf::ParamGroup::kAggregation);
  s.add("frozen", Tensor::row({7.0}), famf::ParamGroup::kRest, false);
  return s;
}

std::string bytes_of(const ParameterStore& s, const std::string& header = "{}") {
  const auto v = famf::encode_checkpoint(s, header);
  return {v.begin(), v.end()};
}

famf::FamfConfig tiny_config() {
  famf::FamfConfig c;
  c.dim = 8;
  c.clusters = 2;
  c.num_classes = 5;
  c.hidden_dim = 16;
  c.fusion_hidden1 = 4;
  c.fusion_hidden2 = 2;
  c.frames = 6;
  return c;
}

}  // namespace

TEST_CASE("round trip preserves every field") {
  const auto s = small_store();
  const auto ck = famf::decode_checkpoint(bytes_of(s, "hello"));
  CHECK(ck.header == "hello");
  REQUIRE(ck.params.size() == 3);
  for (const auto& [name, p] : s) {
    const auto& q = ck.params.at(name);
    CHECK(q.value == p.value);
    CHECK(q.group == p.group);
    CHECK(q.trainable == p.trainable);
  }
}

TEST_CASE("layout starts with magic, version and header") {
  const auto b = bytes_of(small_store(), "xy");
  CHECK(b.substr(0, 8) == "FAMFCKPT");
  std::uint32_t version;
  std::memcpy(&version, b.data() + 8, 4);
  CHECK(version == famf::kCheckpointVersion);
  std::uint64_t header_len;
  std::memcpy(&header_len, b.data() + 12, 8);
  CHECK(header_len == 2);
  CHECK(b.substr(20, 2) == "xy");
  std::uint64_t count;
  std::memcpy(&count, b.data() + 22, 8);
  CHECK(count == 3);
  // Keys in ascending order: "a" comes first.
  std::uint32_t key_len;
  std::memcpy(&key_len, b.data() + 30, 4);
  CHECK(key_len == 1);
  CHECK(b[34] == 'a');
}

TEST_CASE("encoding is deterministic") {
  CHECK(bytes_of(small_store()) == bytes_of(small_store()));
  const famf::FamfModel a(tiny_config(), 3), b(tiny_config(), 3);
  CHECK(bytes_of(a.params()) == bytes_of(b.params()));
}

TEST_CASE("a reloaded model produces identical logits") {
  famf::FamfModel model(tiny_config(), 4);
  const auto header = famf::config::checkpoint_header(model.config());
  const auto dir = std::filesystem::temp_directory_path() / "famf_test_checkpoint";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "ck.bin").string();
  famf::save_checkpoint(path, model.params(), header);
  const auto ck = famf::load_checkpoint(path);
  const auto parsed = famf::config::parse_checkpoint_header(ck.header);
  CHECK(parsed.fingerprint == famf::config::model_fingerprint(model.config()));
  famf::FamfModel back(parsed.model, ck.params);

  std::mt19937_64 rng(4);
  famf::data::Episode ep;
  ep.face = oracle::gaussian(9, 8, rng);
  ep.audio = oracle::gaussian(1, 8, rng);
  CHECK(back.logits(ep) == model.logits(ep));
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed checkpoints raise parse errors with offsets") {
  const auto good = bytes_of(small_store(), "header");

  SUBCASE("bad magic") {
    auto b = good;
    b[3] = '?';
    try {
      famf::decode_checkpoint(b);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("unknown version") {
    auto b = good;
    b[8] = 9;
    try {
      famf::decode_checkpoint(b);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 8);
      CHECK(std::string(e.what()).find("version 9") != std::string::npos);
    }
  }
  SUBCASE("every truncation fails cleanly") {
    for (std::size_t cut = 0; cut < good.size(); ++cut) {
      try {
        famf::decode_checkpoint(std::string_view(good).substr(0, cut));
        FAIL("accepted a truncated checkpoint at " << cut);
      } catch (const ParseError& e) {
        CHECK(e.offset() <= cut);
      }
    }
  }
  SUBCASE("trailing bytes") {
    CHECK_THROWS_AS(famf::decode_checkpoint(good + "!"), ParseError);
  }
  SUBCASE("absurd extents do not allocate") {
    // The first entry's first extent sits after magic, version, header,
    // count, key "a", group, flag and rank.
    const std::size_t at = 8 + 4 + 8 + 6 + 8 + 4 + 1 + 1 + 1 + 4;
    auto b = good;
    const std::uint64_t huge = std::uint64_t{1} << 60;
    std::memcpy(b.data() + at, &huge, 8);
    CHECK_THROWS_AS(famf::decode_checkpoint(b), ParseError);
  }
  SUBCASE("bad group byte") {
    auto b = good;
    b[8 + 4 + 8 + 6 + 8 + 4 + 1] = 5;
    CHECK_THROWS_AS(famf::decode_checkpoint(b), ParseError);
  }
  SUBCASE("random corruption never crashes") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      auto b = good;
      for (int k = 0; k < 3; ++k) b[rng() % b.size()] = static_cast<char>(rng());
      try {
        famf::decode_checkpoint(b);
      } catch (const ParseError&) {
      } catch (const famf::DimensionError&) {
      } catch (const famf::NumericError&) {
      }
    }
  }
}

TEST_CASE("missing file") {
  CHECK_THROWS(famf::load_checkpoint("/nonexistent/famf/ck.bin"));
}
