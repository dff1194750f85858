#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "amelo/vector_index.hpp"

namespace amelo {

// Binary index file, all integers little-endian:
//   "AMCI" | u32 version | u8 kind | u32 dim | u64 count
//   count * dim f32 (row-major) | count * (u16 len, UTF-8 id)
//   [kind-specific tail] | u32 CRC32 of every preceding byte
// Kind 0 is a flat index. Kind 1 is a k-means model: the vector block holds
// the centroids and the tail holds assignment, inertia history and any
// standardization. Kind 2 is a sparse matrix stored densified.
inline constexpr std::uint32_t kIndexFormatVersion = 1;

enum class IndexKind : std::uint8_t { Flat = 0, KMeans = 1, Sparse = 2 };

using AnyIndex = std::variant<FlatIndex, KMeansModel, SparseMatrix>;

std::vector<std::uint8_t> encode_index(const FlatIndex& index);
std::vector<std::uint8_t> encode_index(const KMeansModel& model);
std::vector<std::uint8_t> encode_index(const SparseMatrix& matrix);

/// Throws Io (bad magic), FormatVersionMismatch or ChecksumMismatch.
AnyIndex decode_index(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling and renames it into place.
void persist_index(const AnyIndex& index, const std::filesystem::path& path);
AnyIndex load_index(const std::filesystem::path& path);

}  // namespace amelo
