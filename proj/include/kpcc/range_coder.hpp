// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_RANGE_CODER_HPP
#define KPCC_RANGE_CODER_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "kpcc/probmodel.hpp"

namespace kpcc {

// Byte-oriented 32-bit range coder with a 16-bit frequency scale.
//
// The encoder keeps a 33-bit `low` and a 32-bit `range`. Each symbol maps
// range -> (range >> 16) * freq; whenever range drops below 2^24 the top byte
// of low is shifted out. Bytes that may still receive a carry are held back
// (one cached byte plus a run of 0xFF) until the carry is resolved. The first
// byte of the classic scheme is always zero and is not stored; the flush
// writes the last four bytes of low. A payload therefore holds exactly
// 4 + (number of renormalization shifts) bytes, and the decoder consumes
// exactly that many, which makes truncation and trailing garbage detectable.

class RangeEncoder {
public:
    /// Narrows the interval to [low, low + freq) out of 65536.
    void encode(std::uint32_t low, std::uint32_t freq);
    /// Flushes and returns the payload. The encoder is spent afterwards.
    std::vector<std::uint8_t> finish();

private:
    void shift_low();
    void emit(std::uint8_t b);

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    bool drop_next_ = true;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    /// Throws IntegrityError if fewer than four bytes are available.
    explicit RangeDecoder(std::span<const std::uint8_t> bytes);

    /// Scaled position of the next symbol in [0, 65536). Throws IntegrityError
    /// when the code value lies outside the current interval (corrupt data).
    std::uint32_t target();
    /// Must follow target() with the interval of the symbol it selected.
    void consume(std::uint32_t low, std::uint32_t freq);
    /// Throws IntegrityError unless every byte has been consumed.
    void finish() const;

    std::size_t position() const { return pos_; }

private:
    std::uint8_t next_byte();

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t step_ = 0;
};

struct CodedPayload {
    std::vector<std::uint8_t> bytes;
    std::uint32_t token_count = 0;

    friend bool operator==(const CodedPayload&, const CodedPayload&) = default;
};

/// For each token: query the session's CDF, code the token, push it.
CodedPayload encode_tokens(std::span<const TokenId> tokens, ModelSession& session);

/// Inverse of encode_tokens given a session in the same state the encoder's
/// was. Throws IntegrityError when the payload runs out early, holds extra
/// bytes or decodes outside the table.
std::vector<TokenId> decode_tokens(const CodedPayload& payload, ModelSession& session);

} // namespace kpcc

#endif // KPCC_RANGE_CODER_HPP
