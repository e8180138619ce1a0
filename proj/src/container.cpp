// SPDX-License-Identifier: Apache-2.0

#include "kpcc/container.hpp"

#include <algorithm>
#include <string>

#include "kpcc/byte_io.hpp"
#include "kpcc/digest.hpp"
#include "kpcc/errors.hpp"

namespace kpcc {

namespace {

constexpr char kMagic[] = "KPCC";
constexpr std::size_t kCheckedHeaderBytes = kHeaderSize - 4;

std::uint32_t header_check(std::span<const std::uint8_t> header_bytes) {
    return static_cast<std::uint32_t>(fnv1a(header_bytes.first(kCheckedHeaderBytes)));
}

void check_chunk_indices(const std::vector<ChunkRecord>& chunks, std::size_t cluster) {
    std::vector<bool> seen(chunks.size(), false);
    for (const auto& c : chunks) {
        if (c.chunk_index >= chunks.size()) {
            throw IntegrityError("cluster " + std::to_string(cluster) + ": chunk index " +
                                 std::to_string(c.chunk_index) + " out of range");
        }
        if (seen[c.chunk_index]) {
            throw IntegrityError("cluster " + std::to_string(cluster) + ": duplicate chunk index " +
                                 std::to_string(c.chunk_index));
        }
        seen[c.chunk_index] = true;
    }
}

ContainerHeader parse_header(ByteReader<IntegrityError>& r, std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 5 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
        throw FormatError("not a KPCC container (bad magic)");
    }
    if (bytes[4] != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(bytes[4]));
    if (bytes.size() < kHeaderSize) throw IntegrityError("container header truncated");
    r.bytes(5);
    ContainerHeader h;
    h.source_depth = r.u8();
    const std::uint8_t k_mode = r.u8();
    h.schedule_digest = r.u64();
    const std::uint8_t model_id = r.u8();
    h.model_digest = r.u64();
    const std::uint8_t cb_kind = r.u8();
    h.codebook.base_id = r.u32();
    h.codebook.vocab_size = r.u32();
    h.codebook.digest = r.u64();
    h.max_chunk_len = r.u32();
    h.point_count = r.u64();
    h.cluster_count = r.u32();
    const std::uint32_t check = r.u32();
    if (check != header_check(bytes)) throw IntegrityError("container header check mismatch");

    if (h.source_depth < 1 || h.source_depth > kMaxBitDepth) throw FormatError("source bit depth out of range");
    if (k_mode > static_cast<std::uint8_t>(KMode::mixed12)) throw FormatError("unknown k-mode " + std::to_string(k_mode));
    h.k_mode = static_cast<KMode>(k_mode);
    if (h.schedule_digest != schedule_family_digest(h.k_mode)) throw FormatError("schedule digest does not match k-mode");
    if (model_id > static_cast<std::uint8_t>(ModelId::external_bridge)) {
        throw FormatError("unknown model id " + std::to_string(model_id));
    }
    h.model_id = static_cast<ModelId>(model_id);
    if (cb_kind > static_cast<std::uint8_t>(Codebook::Kind::file)) throw FormatError("unknown codebook kind");
    h.codebook.kind = static_cast<Codebook::Kind>(cb_kind);
    if (h.max_chunk_len == 0) throw FormatError("max_chunk_len is zero");
    return h;
}

} // namespace

CodebookRef make_codebook_ref(const Codebook& cb) {
    return {cb.kind(), cb.base_id(), cb.vocab_size(), cb.digest()};
}

std::uint64_t schedule_family_digest(KMode mode) {
    Fnv1a h;
    h.add_string("kpcc-schedule-v1");
    h.add_u8(static_cast<std::uint8_t>(mode));
    for (const auto& s : default_schedule(1, mode).levels) {
        h.add_u8(s.sx);
        h.add_u8(s.sy);
        h.add_u8(s.sz);
    }
    return h.value();
}

std::vector<std::uint8_t> write_container(const CompressedFile& file) {
    const auto& h = file.header;
    if (h.cluster_count != file.clusters.size()) {
        throw FormatError("cluster_count " + std::to_string(h.cluster_count) + " does not match " +
                          std::to_string(file.clusters.size()) + " cluster records");
    }
    ByteWriter w;
    w.str("KPCC");
    w.u8(kContainerVersion);
    w.u8(h.source_depth);
    w.u8(static_cast<std::uint8_t>(h.k_mode));
    w.u64(h.schedule_digest);
    w.u8(static_cast<std::uint8_t>(h.model_id));
    w.u64(h.model_digest);
    w.u8(static_cast<std::uint8_t>(h.codebook.kind));
    w.u32(h.codebook.base_id);
    w.u32(h.codebook.vocab_size);
    w.u64(h.codebook.digest);
    w.u32(h.max_chunk_len);
    w.u64(h.point_count);
    w.u32(h.cluster_count);
    w.u32(header_check(w.data()));

    for (std::size_t ci = 0; ci < file.clusters.size(); ++ci) {
        const auto& c = file.clusters[ci];
        for (auto o : c.offset) {
            if (o > UINT32_MAX) throw FormatError("cluster offset " + std::to_string(o) + " exceeds u32");
        }
        if (c.chunks.size() > UINT16_MAX) throw FormatError("cluster has more than 65535 chunks");
        try {
            check_chunk_indices(c.chunks, ci);
        } catch (const IntegrityError& e) {
            throw FormatError(e.what());
        }
        for (auto o : c.offset) w.u32(static_cast<std::uint32_t>(o));
        w.u8(c.local_depth);
        w.u16(static_cast<std::uint16_t>(c.chunks.size()));
        for (const auto& ch : c.chunks) {
            if (ch.payload.bytes.size() > UINT32_MAX) throw FormatError("chunk payload exceeds u32 length");
            w.u16(ch.chunk_index);
            w.u32(ch.payload.token_count);
            w.u32(static_cast<std::uint32_t>(ch.payload.bytes.size()));
            w.bytes(ch.payload.bytes);
        }
    }
    return w.take();
}

ContainerHeader read_header(std::span<const std::uint8_t> bytes) {
    ByteReader<IntegrityError> r(bytes);
    return parse_header(r, bytes);
}

CompressedFile read_container(std::span<const std::uint8_t> bytes) {
    ByteReader<IntegrityError> r(bytes);
    CompressedFile file;
    file.header = parse_header(r, bytes);
    for (std::uint32_t ci = 0; ci < file.header.cluster_count; ++ci) {
        if (r.remaining() < kClusterRecordSize) throw IntegrityError("cluster record " + std::to_string(ci) + " truncated");
        ClusterRecord c;
        for (auto& o : c.offset) o = r.u32();
        c.local_depth = r.u8();
        if (c.local_depth < 1 || c.local_depth > kMaxBitDepth) {
            throw IntegrityError("cluster " + std::to_string(ci) + " has local depth " + std::to_string(c.local_depth));
        }
        const std::uint16_t chunk_count = r.u16();
        for (std::uint16_t k = 0; k < chunk_count; ++k) {
            ChunkRecord ch;
            ch.chunk_index = r.u16();
            ch.payload.token_count = r.u32();
            const std::uint32_t len = r.u32();
            const auto body = r.bytes(len);
            ch.payload.bytes.assign(body.begin(), body.end());
            c.chunks.push_back(std::move(ch));
        }
        check_chunk_indices(c.chunks, ci);
        file.clusters.push_back(std::move(c));
    }
    if (r.remaining() != 0) throw IntegrityError(std::to_string(r.remaining()) + " trailing bytes after the last cluster");
    return file;
}

double bits_per_point(std::span<const std::uint8_t> bytes) {
    const auto h = read_header(bytes);
    if (h.point_count == 0) throw IntegrityError("container declares zero points");
    return 8.0 * static_cast<double>(bytes.size()) / static_cast<double>(h.point_count);
}

} // namespace kpcc
