// SPDX-License-Identifier: Apache-2.0

#include "kpcc/tokenmap.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "kpcc/digest.hpp"
#include "kpcc/errors.hpp"

namespace kpcc {

Codebook::Codebook(int k, TokenId bos, TokenId eos, TokenId pad, std::vector<TokenId> symbol_to_token,
                   std::uint32_t vocab_size, Kind kind, TokenId base_id)
    : k_(k), bos_(bos), eos_(eos), pad_(pad), symbol_to_token_(std::move(symbol_to_token)),
      vocab_size_(vocab_size), kind_(kind), base_id_(base_id) {
    if (k < 1 || k > 16) throw ParameterError("codebook K must lie in [1, 16]");
    if (symbol_to_token_.size() != (std::size_t{1} << k) - 1) {
        throw ParameterError("codebook needs " + std::to_string((1u << k) - 1) + " symbol tokens, got " +
                             std::to_string(symbol_to_token_.size()));
    }
    if (bos == eos || bos == pad || eos == pad) throw ParameterError("special token ids must be distinct");
    if (bos >= vocab_size || eos >= vocab_size || pad >= vocab_size) {
        throw ParameterError("special token id exceeds vocabulary");
    }
    token_to_symbol_.assign(vocab_size, 0);
    for (std::size_t i = 0; i < symbol_to_token_.size(); ++i) {
        const TokenId t = symbol_to_token_[i];
        if (t >= vocab_size) {
            throw ParameterError("vocabulary of " + std::to_string(vocab_size) + " too small for token " +
                                 std::to_string(t));
        }
        if (is_special(t)) throw ParameterError("symbol token collides with a special id");
        if (token_to_symbol_[t] != 0) throw ParameterError("codebook maps two symbols to token " + std::to_string(t));
        token_to_symbol_[t] = static_cast<std::uint32_t>(i + 1);
    }
}

TokenId Codebook::token_for(std::uint32_t symbol) const {
    if (symbol == 0 || symbol > symbol_to_token_.size()) {
        throw MappingError("symbol " + std::to_string(symbol) + " outside the codebook alphabet");
    }
    return symbol_to_token_[symbol - 1];
}

std::uint32_t Codebook::symbol_for(TokenId token) const {
    if (token >= token_to_symbol_.size() || token_to_symbol_[token] == 0) {
        throw MappingError("token " + std::to_string(token) + " is not in the codebook image");
    }
    return token_to_symbol_[token];
}

std::uint64_t Codebook::digest() const {
    Fnv1a h;
    h.add_u32(static_cast<std::uint32_t>(k_));
    h.add_u32(bos_);
    h.add_u32(eos_);
    h.add_u32(pad_);
    h.add_u32(vocab_size_);
    for (auto t : symbol_to_token_) h.add_u32(t);
    return h.value();
}

Codebook default_codebook(int k, TokenId base_id, std::uint32_t vocab_size) {
    if (k < 1 || k > 16) throw ParameterError("codebook K must lie in [1, 16]");
    if (base_id < 3) throw ParameterError("base_id must be at least 3");
    const std::uint64_t needed = std::uint64_t{base_id} + (std::uint64_t{1} << k) - 1;
    if (vocab_size == 0) vocab_size = static_cast<std::uint32_t>(needed);
    if (needed > vocab_size) {
        throw ParameterError("vocabulary of " + std::to_string(vocab_size) + " too small, need " +
                             std::to_string(needed));
    }
    std::vector<TokenId> map((std::size_t{1} << k) - 1);
    for (std::size_t s = 1; s <= map.size(); ++s) map[s - 1] = base_id + static_cast<TokenId>(s) - 1;
    return Codebook(k, 0, 1, 2, std::move(map), vocab_size, Codebook::Kind::affine, base_id);
}

Codebook load_codebook(const std::filesystem::path& path, int k, std::uint32_t vocab_size) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open codebook " + path.string());
    std::vector<TokenId> ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(line.substr(first), &used);
            ids.push_back(static_cast<TokenId>(v));
        } catch (const std::exception&) {
            throw FormatError("bad codebook line '" + line + "'");
        }
    }
    const std::size_t want = 3 + (std::size_t{1} << k) - 1;
    if (ids.size() != want) {
        throw FormatError("codebook has " + std::to_string(ids.size()) + " ids, expected " + std::to_string(want));
    }
    if (vocab_size == 0) vocab_size = *std::max_element(ids.begin(), ids.end()) + 1;
    std::vector<TokenId> map(ids.begin() + 3, ids.end());
    return Codebook(k, ids[0], ids[1], ids[2], std::move(map), vocab_size, Codebook::Kind::file);
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write codebook " + path.string());
    out << cb.bos() << '\n' << cb.eos() << '\n' << cb.pad() << '\n';
    for (std::uint32_t s = 1; s <= cb.alphabet_size(); ++s) out << cb.token_for(s) << '\n';
}

std::vector<TokenChunk> tokenize_chunks(std::span<const std::uint16_t> symbols, const Codebook& cb,
                                        std::size_t max_chunk_len) {
    if (max_chunk_len == 0) throw ParameterError("max_chunk_len must be positive");
    std::vector<TokenChunk> chunks;
    for (std::size_t begin = 0; begin < symbols.size(); begin += max_chunk_len) {
        const std::size_t end = std::min(symbols.size(), begin + max_chunk_len);
        TokenChunk chunk;
        chunk.chunk_index = static_cast<std::uint32_t>(chunks.size());
        chunk.tokens.reserve(end - begin + 2);
        chunk.tokens.push_back(cb.bos());
        for (std::size_t i = begin; i < end; ++i) chunk.tokens.push_back(cb.token_for(symbols[i]));
        chunk.tokens.push_back(cb.eos());
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

std::vector<std::uint16_t> detokenize_chunks(std::vector<TokenChunk> chunks, const Codebook& cb) {
    std::sort(chunks.begin(), chunks.end(),
              [](const TokenChunk& a, const TokenChunk& b) { return a.chunk_index < b.chunk_index; });
    std::vector<std::uint16_t> symbols;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        if (c.chunk_index != i) {
            throw IntegrityError(c.chunk_index < i ? "duplicate chunk index " + std::to_string(c.chunk_index)
                                                   : "missing chunk index " + std::to_string(i));
        }
        if (c.tokens.size() < 2 || c.tokens.front() != cb.bos() || c.tokens.back() != cb.eos()) {
            throw IntegrityError("chunk " + std::to_string(i) + " is not framed by bos/eos");
        }
        for (std::size_t j = 1; j + 1 < c.tokens.size(); ++j) {
            const TokenId t = c.tokens[j];
            if (cb.is_special(t)) {
                throw IntegrityError("special token inside payload of chunk " + std::to_string(i));
            }
            symbols.push_back(static_cast<std::uint16_t>(cb.symbol_for(t)));
        }
    }
    return symbols;
}

} // namespace kpcc
