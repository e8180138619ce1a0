// SPDX-License-Identifier: Apache-2.0

#include "kpcc/range_coder.hpp"

#include <cassert>
#include <string>

#include "kpcc/errors.hpp"

namespace kpcc {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::encode(std::uint32_t low, std::uint32_t freq) {
    assert(freq > 0 && low + freq <= kCdfTotal);
    const std::uint32_t r = range_ >> kCdfBits;
    low_ += std::uint64_t{r} * low;
    range_ = r * freq;
    while (range_ < kTop) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::emit(std::uint8_t b) {
    if (drop_next_) {
        assert(b == 0);
        drop_next_ = false;
        return;
    }
    out_.push_back(b);
}

void RangeEncoder::shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t held = cache_;
        do {
            emit(static_cast<std::uint8_t>(held + carry));
            held = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= in_.size()) throw IntegrityError("range decoder ran out of payload bytes");
    return in_[pos_++];
}

std::uint32_t RangeDecoder::target() {
    step_ = range_ >> kCdfBits;
    const std::uint32_t value = code_ / step_;
    if (value >= kCdfTotal) throw IntegrityError("range decoder state outside the coding interval");
    return value;
}

void RangeDecoder::consume(std::uint32_t low, std::uint32_t freq) {
    code_ -= step_ * low;
    range_ = step_ * freq;
    while (range_ < kTop) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

void RangeDecoder::finish() const {
    if (pos_ != in_.size()) {
        throw IntegrityError("payload has " + std::to_string(in_.size() - pos_) + " unconsumed bytes");
    }
}

CodedPayload encode_tokens(std::span<const TokenId> tokens, ModelSession& session) {
    RangeEncoder enc;
    for (const TokenId t : tokens) {
        if (t >= session.vocab_size()) throw DomainError("token " + std::to_string(t) + " outside vocabulary");
        const QuantizedCdf cdf = session.next_cdf();
        enc.encode(cdf.low(t), cdf.freq(t));
        session.push_token(t);
    }
    return {enc.finish(), static_cast<std::uint32_t>(tokens.size())};
}

std::vector<TokenId> decode_tokens(const CodedPayload& payload, ModelSession& session) {
    RangeDecoder dec(payload.bytes);
    std::vector<TokenId> tokens;
    tokens.reserve(payload.token_count);
    for (std::uint32_t i = 0; i < payload.token_count; ++i) {
        const QuantizedCdf cdf = session.next_cdf();
        const TokenId t = cdf.find(dec.target());
        dec.consume(cdf.low(t), cdf.freq(t));
        session.push_token(t);
        tokens.push_back(t);
    }
    dec.finish();
    return tokens;
}

} // namespace kpcc
