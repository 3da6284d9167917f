// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint binary layout (all integers little-endian):
//
//   "GGCL" | u32 version (1) | u64 fingerprint | u32 tensor count
//   per tensor: u16 name length | name bytes (UTF-8) | u8 rank | u32 dims[rank]
//               | prod(dims) IEEE-754 binary32 values
//
// Tensors are written in lexicographic name order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "geomgcl/tensor.hpp"

namespace geomgcl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t fingerprint = 0;
  ParameterStore params;
};

std::string encode_checkpoint(const ParameterStore& params, std::uint64_t fingerprint);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes to a temporary sibling then renames over `path`.
void save_checkpoint(const ParameterStore& params, std::uint64_t fingerprint, const std::filesystem::path& path);

/// Reads a checkpoint; when `expected_fingerprint` is set a mismatch is an error.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

/// Rounds every value through binary32, as a save/load round trip would.
ParameterStore round_to_float(const ParameterStore& params);

}  // namespace geomgcl
