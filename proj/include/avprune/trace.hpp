// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "avprune/model.hpp"

namespace avprune {

// Binary attention trace format "AVTRACE1":
//   bytes 0..7    magic "AVTRACE1"
//   bytes 8..19   little-endian u32 L, H, n
//   then L*H matrices of n*n little-endian float32, row-major,
//   layer-major then head-major.
// Total size is exactly 8 + 12 + 4*L*H*n^2 bytes. Rows of a valid trace sum
// to 1 within 1e-4 (float32 quantization).

inline constexpr char kTraceMagic[8] = {'A', 'V', 'T', 'R', 'A', 'C', 'E', '1'};

void save_trace(const std::filesystem::path& path, std::span<const AttentionTensor> attention);

// Parses and validates a trace; on success tensors are upcast to 64-bit for
// the analysis path. Throws FormatError (bad magic / bad header),
// TruncationError (size mismatch) or ValidationError (row sums, naming the
// worst row).
std::vector<AttentionTensor> load_trace(const std::filesystem::path& path);

}  // namespace avprune
