#pragma once

#include "fedfreeze/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedfreeze {

// Wire format: a plain concatenation of records, one per tensor, in layer order
// (weight before bias). All integers and floats are little-endian.
//
//   u32 id_length | id bytes | u8 role (0 weight, 1 bias) | u8 group (0 enc, 1 dec)
//   | u32 rank | u64 dims[rank] | f64 payload[prod(dims)]
//
// Records carry no outer header, so the size of a partition is additive:
// wire_size(all) == wire_size(encoder) + wire_size(decoder).
// Checkpoint files prepend the 8-byte magic "FFPARAM1".

std::vector<std::uint8_t> serialize_params(const ParamSet& params, Partition p = Partition::all);
ParamSet deserialize_params(const std::vector<std::uint8_t>& bytes);

/// Byte count of serialize_params(params, p) without materializing it.
std::int64_t wire_size(const ParamSet& params, Partition p);

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace fedfreeze
