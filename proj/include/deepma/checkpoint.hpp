#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepma/model.hpp"

namespace deepma {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): "DMAN", u32 version, u32 N, ArchConfig, u32 tensor
// count, then per tensor u16 name length, name bytes, u8 rank, rank x u32 dims,
// f32 values. ArchConfig is height, width, in_channels, u32 block count,
// block_channels[], strides[], afb_reduction, edp_count (all u32) and the
// power budget as f64.
std::vector<std::uint8_t> serialize_checkpoint(const DmaNetF& net);
DmaNetF deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const DmaNetF& net, const std::filesystem::path& path);
DmaNetF load_checkpoint(const std::filesystem::path& path);

}  // namespace deepma
