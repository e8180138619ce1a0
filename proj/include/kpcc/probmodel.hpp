// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_PROBMODEL_HPP
#define KPCC_PROBMODEL_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kpcc/tokenmap.hpp"

namespace kpcc {

inline constexpr std::uint32_t kCdfBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfBits;

using u128 = unsigned __int128;

/// Integer cumulative frequencies over a vocabulary: cum[0] = 0,
/// cum[V] = 65536, and every token owns at least one unit.
class QuantizedCdf {
public:
    QuantizedCdf() = default;
    /// Throws DomainError unless the table satisfies the invariants above.
    explicit QuantizedCdf(std::vector<std::uint32_t> cumfreq);

    std::uint32_t vocab_size() const { return static_cast<std::uint32_t>(cum_.size() - 1); }
    std::uint32_t low(TokenId t) const { return cum_[t]; }
    std::uint32_t freq(TokenId t) const { return cum_[t + 1] - cum_[t]; }
    std::span<const std::uint32_t> cumfreq() const { return cum_; }

    /// Token whose interval [cum[t], cum[t+1]) contains `target` (< 65536).
    TokenId find(std::uint32_t target) const;

    friend bool operator==(const QuantizedCdf&, const QuantizedCdf&) = default;

private:
    std::vector<std::uint32_t> cum_;
};

/// The fixed quantization rule. With raw probabilities p_t = w_t / sum(w):
/// f_t = floor(p_t * (65536 - V)) + 1, then the remaining units go one each to
/// tokens ordered by raw probability (ties to the lower id), cycling if needed.
/// If float rounding overshoots, units are taken back in that same order from
/// tokens holding more than one.
QuantizedCdf quantize_weights(std::span<const double> weights);

/// Exact variant: p_t = numerators[t] / denominator, with sum(numerators) ==
/// denominator. All arithmetic is integer, so the table is portable.
QuantizedCdf quantize_rational(std::span<const u128> numerators, u128 denominator);

QuantizedCdf uniform_cdf(std::uint32_t vocab_size);

/// Code length in bits of token t under cdf: -log2(freq / 65536).
double code_length_bits(const QuantizedCdf& cdf, TokenId t);

enum class ModelId : std::uint8_t { uniform = 0, adaptive_ctx = 1, tiny_transformer = 2, external_bridge = 3 };

std::string_view to_string(ModelId id);
ModelId parse_model_id(std::string_view name); // accepts "adaptive" for adaptive_ctx etc.

/// Autoregressive conditional distribution over a fixed vocabulary. Calls on
/// one session must be serialized; distinct sessions are independent.
class ModelSession {
public:
    virtual ~ModelSession() = default;
    virtual std::uint32_t vocab_size() const = 0;
    /// Distribution of the next token given everything pushed so far.
    virtual QuantizedCdf next_cdf() = 0;
    /// Appends `t` to the context. Throws DomainError when t >= vocab_size().
    virtual void push_token(TokenId t) = 0;
    /// Forget the context; the next next_cdf() equals a fresh session's.
    virtual void reset() = 0;
};

/// Immutable model description; hands out independent sessions.
class ProbabilityModel {
public:
    virtual ~ProbabilityModel() = default;
    virtual ModelId id() const = 0;
    virtual std::uint32_t vocab_size() const = 0;
    /// Identifies the parameters; containers record it so decoding with a
    /// different model is refused.
    virtual std::uint64_t params_digest() const = 0;
    virtual std::unique_ptr<ModelSession> start_session() const = 0;
};

struct ModelParams {
    std::uint32_t vocab_size = 0;
    int context_order = 2;            // adaptive_ctx
    std::string weights_path;         // tiny_transformer
    std::string bridge_command;       // external_bridge; KPCC_BRIDGE_CMD when empty
    int bridge_timeout_ms = 30000;    // external_bridge
};

/// Builds a model. Throws LoadError for unreadable or mismatched weights,
/// TransportError if the bridge process cannot be reached, ParameterError for
/// bad values.
std::shared_ptr<const ProbabilityModel> make_model(ModelId id, const ModelParams& params);

/// Convenience: make_model(...)->start_session().
std::unique_ptr<ModelSession> session_start(ModelId id, const ModelParams& params);

class UniformModel final : public ProbabilityModel {
public:
    explicit UniformModel(std::uint32_t vocab_size);
    ModelId id() const override { return ModelId::uniform; }
    std::uint32_t vocab_size() const override { return vocab_; }
    std::uint64_t params_digest() const override;
    std::unique_ptr<ModelSession> start_session() const override;

private:
    std::uint32_t vocab_;
};

/// Order-N context mixing over token ids. Each order k in [0, N] keeps
/// per-context counts with a Krichevsky-Trofimov estimate (c + 1/2)/(n + V/2);
/// the orders are interpolated with weights 0.9, 0.09, ... down to order 0,
/// which takes the remainder (0.9/0.09/0.01 for N = 2). Everything is done in
/// exact rational arithmetic. Supported orders: 0 to 3.
class AdaptiveContextModel final : public ProbabilityModel {
public:
    AdaptiveContextModel(std::uint32_t vocab_size, int order = 2);
    ModelId id() const override { return ModelId::adaptive_ctx; }
    std::uint32_t vocab_size() const override { return vocab_; }
    std::uint64_t params_digest() const override;
    std::unique_ptr<ModelSession> start_session() const override;
    int order() const { return order_; }

    /// Interpolation weight of order k, scaled by 10^order so all are integers.
    static std::uint64_t scaled_weight(int order, int k);
    /// A context's counts are halved once its total reaches this value.
    static constexpr std::uint32_t kCountLimit = 1u << 20;

private:
    std::uint32_t vocab_;
    int order_;
};

} // namespace kpcc

#endif // KPCC_PROBMODEL_HPP
