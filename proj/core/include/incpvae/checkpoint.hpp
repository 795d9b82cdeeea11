#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "incpvae/model.hpp"

namespace incpvae {

// Layout, all integers little-endian:
//   "INCP"  u32 version  u32 len  descriptor bytes
//   repeated until end of file:
//     u32 name_len  name bytes  u32 rank  u32 dims[rank]  f32 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
// Parameters are restored with requires_grad set. Throws FormatError on
// malformed input and ContractError when the records do not match the
// stored architecture.
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace incpvae
