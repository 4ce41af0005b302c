// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// "GFDS" dataset container: little-endian, magic "GFDS", u32 format
// version, u32 array count, then per array a u32-length-prefixed UTF-8
// name, a u8 dtype code (0 = f32, 1 = u8, 2 = u32), a u8 rank, u32 extents
// and the raw element data.
//
#pragma once

#include <gridformer/fields.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gridformer {

enum class DType : std::uint8_t { F32 = 0, U8 = 1, U32 = 2 };

struct NamedArray {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::uint32_t> extents;
    /// Little-endian element bytes.
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

std::vector<std::uint8_t> encode_container(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_container(const std::vector<std::uint8_t>& bytes);

NamedArray make_f32_array(std::string name, const std::vector<Vec3>& rows);
NamedArray make_u8_array(std::string name, const std::vector<std::uint8_t>& values);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

} // namespace gridformer
