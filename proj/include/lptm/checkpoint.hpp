// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container. All integers are little-endian.
//
//   offset  size  field
//   0       8     magic "LPTMCKPT"
//   8       4     u32 format version (currently 1)
//   12      4     u32 CRC-32 (zlib polynomial) of every byte after this field
//   16      8     u64 header length N
//   24      N     UTF-8 JSON header: {"format", "model", "domains", "seed",
//                 "step", "heads": {"forecast_horizon", "num_classes"}, "meta"}
//   24+N    4     u32 tensor count
//   then per tensor, in Model::visit order:
//                 u32 name length, name bytes, u32 rank (always 2),
//                 u64 rows, u64 cols, rows*cols f32 values in row-major order
//
// Parameters are held in double precision in memory and rounded to f32 on
// save, so save(load(save(m))) reproduces the file byte for byte.

#pragma once

#include "lptm/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lptm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(Model& model, const nlohmann::json& meta = nlohmann::json::object());

/// Throws CheckpointError on a malformed container and ChecksumError when the
/// stored CRC does not match the payload.
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path);

/// The JSON header of a checkpoint file, after checksum verification.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace lptm
