// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// "GFCK" checkpoint: little-endian, magic "GFCK", u32 format version, the
// model configuration, then every named parameter tensor as
// (u32-prefixed name, u8 dtype = 3 for f64, u8 rank, u32 extents, data).
//
#pragma once

#include <gridformer/model.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gridformer {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_checkpoint(const std::filesystem::path& path);

} // namespace gridformer
