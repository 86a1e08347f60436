#pragma once

// Parameter checkpoint file. Layout (all integers little-endian):
//
//   "FAMFCKPT"                    8-byte magic
//   u32 version                   currently 1
//   u64 header_len, header bytes  free-form UTF-8 (the model config as JSON)
//   u64 entry_count
//   entry_count times:
//     u32 key_len, key bytes
//     u8 group (0 = aggregation, 1 = rest), u8 trainable
//     u32 rank, rank x u64 extents
//     product(extents) x f64 values
//
// Entries are written in ascending key order.

#include <string>
#include <vector>

#include "famf/autodiff.hpp"

namespace famf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string header;
  ParameterStore params;
};

std::vector<char> encode_checkpoint(const ParameterStore& params, const std::string& header);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const ParameterStore& params, const std::string& header);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace famf
