// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_CONTAINER_HPP
#define KPCC_CONTAINER_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "kpcc/ktree.hpp"
#include "kpcc/probmodel.hpp"
#include "kpcc/range_coder.hpp"
#include "kpcc/tokenmap.hpp"

namespace kpcc {

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderSize = 61;
inline constexpr std::size_t kClusterRecordSize = 15;
inline constexpr std::size_t kChunkRecordSize = 10;

struct CodebookRef {
    Codebook::Kind kind = Codebook::Kind::affine;
    std::uint32_t base_id = 3;
    std::uint32_t vocab_size = 0;
    std::uint64_t digest = 0;

    friend bool operator==(const CodebookRef&, const CodebookRef&) = default;
};

CodebookRef make_codebook_ref(const Codebook& cb);

struct ContainerHeader {
    std::uint8_t source_depth = 1;
    KMode k_mode = KMode::octree8;
    std::uint64_t schedule_digest = 0;
    ModelId model_id = ModelId::uniform;
    std::uint64_t model_digest = 0;
    CodebookRef codebook;
    std::uint32_t max_chunk_len = 512;
    std::uint64_t point_count = 0;
    std::uint32_t cluster_count = 0;

    friend bool operator==(const ContainerHeader&, const ContainerHeader&) = default;
};

struct ChunkRecord {
    std::uint16_t chunk_index = 0;
    CodedPayload payload;

    friend bool operator==(const ChunkRecord&, const ChunkRecord&) = default;
};

struct ClusterRecord {
    std::array<std::uint64_t, 3> offset = {0, 0, 0};
    std::uint8_t local_depth = 1;
    std::vector<ChunkRecord> chunks; // any storage order

    friend bool operator==(const ClusterRecord&, const ClusterRecord&) = default;
};

struct CompressedFile {
    ContainerHeader header;
    std::vector<ClusterRecord> clusters;

    friend bool operator==(const CompressedFile&, const CompressedFile&) = default;
};

/// Digest of the split-schedule family a k-mode expands to.
std::uint64_t schedule_family_digest(KMode mode);

/// Serializes a file; see docs/bitstream.md for the layout. Throws
/// FormatError when the parts are inconsistent (cluster_count vs list length,
/// chunk indices not 0..n-1, values that do not fit their fields).
std::vector<std::uint8_t> write_container(const CompressedFile& file);

/// Parses and validates a file. Throws FormatError for a wrong magic or
/// version or invalid enum values, IntegrityError for a corrupted header
/// check, length overruns, trailing bytes and duplicate chunk indices.
CompressedFile read_container(std::span<const std::uint8_t> bytes);

/// Header only; validates the header check but not the cluster records.
ContainerHeader read_header(std::span<const std::uint8_t> bytes);

/// 8 * file bytes / point count, using only the container.
double bits_per_point(std::span<const std::uint8_t> bytes);

} // namespace kpcc

#endif // KPCC_CONTAINER_HPP
