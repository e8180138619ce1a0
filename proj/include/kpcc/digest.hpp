// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_DIGEST_HPP
#define KPCC_DIGEST_HPP

#include <cstdint>
#include <span>
#include <string_view>

namespace kpcc {

/// 64-bit FNV-1a. Multi-byte values are fed little-endian so digests are
/// portable.
class Fnv1a {
public:
    void add_bytes(std::span<const std::uint8_t> bytes) {
        for (auto b : bytes) {
            h_ ^= b;
            h_ *= 0x100000001b3ull;
        }
    }
    void add_u8(std::uint8_t v) { add_bytes(std::span<const std::uint8_t>(&v, 1)); }
    void add_u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) add_u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void add_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) add_u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void add_string(std::string_view s) {
        add_u32(static_cast<std::uint32_t>(s.size()));
        for (char c : s) add_u8(static_cast<std::uint8_t>(c));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    Fnv1a h;
    h.add_bytes(bytes);
    return h.value();
}

} // namespace kpcc

#endif // KPCC_DIGEST_HPP
