// SPDX-License-Identifier: Apache-2.0
//
// AVW1 weight checkpoints (little-endian):
//   "AVW1" | u32 entry_count
//   per entry: u32 name_len | name (UTF-8) | u8 frozen | u8 group | u32 dtype
//              (0 = f32, 1 = f64) | u32 rank | u64 dims[rank] | payload
//   u32 CRC-32 of every preceding byte
#pragma once

#include <filesystem>
#include <string>

#include "avjoint/nn/params.hpp"

namespace avjoint::nn {

template <typename T>
std::string encode_weights(const ParamStore<T>& store);

/// Fills `store` from an encoded checkpoint, matching entries by name.
/// With `require_all`, every store entry must be present in the file.
/// Structural problems throw FormatError with the failing byte offset.
template <typename T>
void decode_weights(const std::string& bytes, ParamStore<T>& store, bool require_all = true);

template <typename T>
void save_weights(const std::filesystem::path& path, const ParamStore<T>& store);

template <typename T>
void load_weights(const std::filesystem::path& path, ParamStore<T>& store, bool require_all = true);

}  // namespace avjoint::nn
