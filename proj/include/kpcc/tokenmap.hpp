// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_TOKENMAP_HPP
#define KPCC_TOKENMAP_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kpcc {

using TokenId = std::uint32_t;

/// Bijection between occupancy symbols [1, 2^K - 1] and model token ids, plus
/// the three framing tokens.
class Codebook {
public:
    enum class Kind : std::uint8_t { affine = 0, file = 1 };

    /// Throws ParameterError if ids collide, the map is not injective, or an
    /// id does not fit `vocab_size`.
    Codebook(int k, TokenId bos, TokenId eos, TokenId pad, std::vector<TokenId> symbol_to_token,
             std::uint32_t vocab_size, Kind kind = Kind::file, TokenId base_id = 0);

    int k() const { return k_; }
    std::uint32_t alphabet_size() const { return static_cast<std::uint32_t>(symbol_to_token_.size()); }
    std::uint32_t vocab_size() const { return vocab_size_; }
    TokenId bos() const { return bos_; }
    TokenId eos() const { return eos_; }
    TokenId pad() const { return pad_; }
    Kind kind() const { return kind_; }
    TokenId base_id() const { return base_id_; }

    bool is_special(TokenId t) const { return t == bos_ || t == eos_ || t == pad_; }

    /// Throws MappingError for symbols outside [1, 2^K - 1].
    TokenId token_for(std::uint32_t symbol) const;
    /// Throws MappingError for tokens outside the symbol image.
    std::uint32_t symbol_for(TokenId token) const;

    /// 64-bit FNV-1a over the full mapping; identifies the codebook in containers.
    std::uint64_t digest() const;

private:
    int k_;
    TokenId bos_, eos_, pad_;
    std::vector<TokenId> symbol_to_token_; // index s-1
    std::vector<std::uint32_t> token_to_symbol_; // 0 = not a symbol token
    std::uint32_t vocab_size_;
    Kind kind_;
    TokenId base_id_;
};

/// bos=0, eos=1, pad=2, symbol s -> base_id + s - 1. When `vocab_size` is 0 the
/// smallest vocabulary that fits is used.
Codebook default_codebook(int k, TokenId base_id = 3, std::uint32_t vocab_size = 0);

/// Text codebook: one token id per line; lines 1-3 are bos, eos, pad and
/// line 3+s holds the token of symbol s. Blank lines and '#' comments are
/// skipped. `vocab_size` 0 means max id + 1.
Codebook load_codebook(const std::filesystem::path& path, int k, std::uint32_t vocab_size = 0);
void save_codebook(const Codebook& cb, const std::filesystem::path& path);

/// Bounded token run framed by bos ... eos.
struct TokenChunk {
    std::uint32_t chunk_index = 0;
    std::vector<TokenId> tokens;

    std::size_t payload_len() const { return tokens.size() >= 2 ? tokens.size() - 2 : 0; }
    friend bool operator==(const TokenChunk&, const TokenChunk&) = default;
};

/// Splits `symbols` into runs of at most `max_chunk_len`, maps and frames
/// each one. An empty input yields no chunks.
std::vector<TokenChunk> tokenize_chunks(std::span<const std::uint16_t> symbols, const Codebook& cb,
                                        std::size_t max_chunk_len);

/// Orders chunks by index, checks framing and inverse-maps the payloads.
/// Throws IntegrityError for missing/duplicate indices or broken framing and
/// MappingError for tokens outside the codebook.
std::vector<std::uint16_t> detokenize_chunks(std::vector<TokenChunk> chunks, const Codebook& cb);

} // namespace kpcc

#endif // KPCC_TOKENMAP_HPP
