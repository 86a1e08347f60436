#include "famf/checkpoint.hpp"

#include "famf/binary_io.hpp"

namespace famf {
namespace {
constexpr std::string_view kMagic = "FAMFCKPT";
}

std::vector<char> encode_checkpoint(const ParameterStore& params, const std::string& header) {
  io::Writer w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(header.size());
  w.put_bytes(header);
  w.put<std::uint64_t>(params.size());
  for (const auto& [key, p] : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.size()));
    w.put_bytes(key);
    w.put<std::uint8_t>(p.group == ParamGroup::kAggregation ? 0 : 1);
    w.put<std::uint8_t>(p.trainable ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) w.put<std::uint64_t>(e);
    w.put_doubles(p.value.data().data(), p.value.size());
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.get_bytes(kMagic.size(), "magic") != kMagic) throw io::ParseError("not a checkpoint file", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw io::ParseError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  Checkpoint ck;
  ck.header = r.get_bytes(r.get<std::uint64_t>("header length"), "header");
  const auto count = r.get<std::uint64_t>("entry count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string key = r.get_bytes(r.get<std::uint32_t>("key length"), "key");
    const std::uint64_t at = r.offset();
    if (ck.params.contains(key)) throw io::ParseError("duplicate parameter " + key, at);
    const auto group = r.get<std::uint8_t>("group of " + key);
    if (group > 1) throw io::ParseError("bad parameter group for " + key, at);
    const auto trainable = r.get<std::uint8_t>("trainable flag of " + key);
    const auto rank = r.get<std::uint32_t>("rank of " + key);
    if (rank > r.remaining() / sizeof(std::uint64_t)) {
      throw io::ParseError("truncated input while reading extents of " + key, r.offset());
    }
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.get<std::uint64_t>("extent of " + key);
      // Reject extents that cannot fit in the rest of the file before allocating.
      if (e != 0 && n > r.remaining() / sizeof(double) / e) {
        throw io::ParseError("truncated input while reading values of " + key, r.offset());
      }
      n *= e;
    }
    std::vector<double> values(shape_size(shape));
    r.get_doubles(values.data(), values.size(), "values of " + key);
    ck.params.add(key, Tensor(std::move(shape), std::move(values)),
                  group == 0 ? ParamGroup::kAggregation : ParamGroup::kRest, trainable != 0);
  }
  if (!r.at_end()) throw io::ParseError("trailing bytes after last checkpoint entry", r.offset());
  return ck;
}

void save_checkpoint(const std::string& path, const ParameterStore& params, const std::string& header) {
  io::write_file(path, encode_checkpoint(params, header));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace famf
