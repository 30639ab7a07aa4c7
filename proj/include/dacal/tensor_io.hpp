#pragma once

#include <filesystem>
#include <string>

#include "dacal/matrix.hpp"

namespace dacal {

// On-disk tensor layout, little-endian:
//   "DACT" | u32 version = 1 | u32 dtype (0 = f32) | u32 ndim | ndim x u64 dims | payload
// A 0x0 matrix is stored with ndim = 0 (16-byte file). Other matrices are
// stored with ndim = 2. On load, ndim = 1 yields an n x 1 matrix and ndim > 2
// flattens all trailing dimensions into columns.

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0;

/// Throws FormatError (bad magic/version/dtype), IoError (missing or
/// truncated file), DataError (non-finite entry).
DenseMatrix load_tensor(const std::filesystem::path& path);

/// Throws IoError when the file cannot be written.
void save_tensor(const DenseMatrix& matrix, const std::filesystem::path& path);

/// Labels are stored as a 1-D f32 tensor of integral values.
LabelVector load_labels(const std::filesystem::path& path, int num_classes);
void save_labels(const LabelVector& labels, const std::filesystem::path& path);

/// FNV-1a 64-bit digest of the shape and payload bytes, as 16 hex digits.
std::string checksum(const DenseMatrix& matrix);

}  // namespace dacal
