// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_BYTE_IO_HPP
#define KPCC_BYTE_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "kpcc/errors.hpp"

namespace kpcc {

/// Appends little-endian scalars to a byte vector.
class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void str(std::string_view s) {
        for (char c : s) out_.push_back(static_cast<std::uint8_t>(c));
    }

    std::size_t size() const { return out_.size(); }
    std::vector<std::uint8_t>& data() { return out_; }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

/// Bounds-checked little-endian reader. Overruns raise the error type `E`.
template <typename E = IntegrityError>
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str(std::size_t n) {
        auto b = bytes(n);
        return std::string(b.begin(), b.end());
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw E("unexpected end of data at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + ")");
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace kpcc

#endif // KPCC_BYTE_IO_HPP
