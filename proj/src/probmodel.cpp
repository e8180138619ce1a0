// SPDX-License-Identifier: Apache-2.0

#include "kpcc/probmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "kpcc/bridge.hpp"
#include "kpcc/digest.hpp"
#include "kpcc/errors.hpp"
#include "kpcc/transformer.hpp"

namespace kpcc {

// ---------------------------------------------------------------------------
// QuantizedCdf

QuantizedCdf::QuantizedCdf(std::vector<std::uint32_t> cumfreq) : cum_(std::move(cumfreq)) {
    if (cum_.size() < 2) throw DomainError("cdf needs at least one token");
    if (cum_.front() != 0 || cum_.back() != kCdfTotal) throw DomainError("cdf must span [0, 65536]");
    for (std::size_t i = 1; i < cum_.size(); ++i) {
        if (cum_[i] <= cum_[i - 1]) throw DomainError("cdf assigns zero mass to token " + std::to_string(i - 1));
    }
}

TokenId QuantizedCdf::find(std::uint32_t target) const {
    // last index with cum[i] <= target
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
    return static_cast<TokenId>(it - cum_.begin() - 1);
}

double code_length_bits(const QuantizedCdf& cdf, TokenId t) {
    return static_cast<double>(kCdfBits) - std::log2(static_cast<double>(cdf.freq(t)));
}

namespace {

// Hands out the units left over after flooring. `before(a, b)` is the strict
// ranking (higher raw probability first, then lower id).
template <typename Before>
QuantizedCdf settle(std::vector<std::uint32_t> freq, Before before) {
    const auto vocab = static_cast<std::uint32_t>(freq.size());
    std::int64_t deficit = kCdfTotal;
    for (auto f : freq) deficit -= f;
    if (deficit > 0) {
        const auto rounds = static_cast<std::uint32_t>(deficit / vocab);
        const auto rem = static_cast<std::size_t>(deficit % vocab);
        if (rounds != 0) {
            for (auto& f : freq) f += rounds;
        }
        if (rem != 0) {
            std::vector<std::uint32_t> idx(vocab);
            std::iota(idx.begin(), idx.end(), 0u);
            std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(rem) - 1, idx.end(), before);
            for (std::size_t i = 0; i < rem; ++i) ++freq[idx[i]];
        }
    } else if (deficit < 0) {
        std::vector<std::uint32_t> idx(vocab);
        std::iota(idx.begin(), idx.end(), 0u);
        std::sort(idx.begin(), idx.end(), before);
        for (std::size_t i = 0; deficit < 0; i = (i + 1) % vocab) {
            if (freq[idx[i]] > 1) {
                --freq[idx[i]];
                ++deficit;
            }
        }
    }
    std::vector<std::uint32_t> cum(vocab + 1, 0);
    for (std::uint32_t t = 0; t < vocab; ++t) cum[t + 1] = cum[t] + freq[t];
    return QuantizedCdf(std::move(cum));
}

void check_vocab(std::size_t vocab) {
    if (vocab == 0 || vocab >= kCdfTotal) {
        throw ParameterError("vocabulary size " + std::to_string(vocab) + " outside [1, 65535]");
    }
}

} // namespace

QuantizedCdf quantize_weights(std::span<const double> weights) {
    check_vocab(weights.size());
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("probability weight must be finite and >= 0");
        sum += w;
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) throw DomainError("probability weights sum to zero");
    const double spread = static_cast<double>(kCdfTotal - weights.size());
    std::vector<std::uint32_t> freq(weights.size());
    for (std::size_t t = 0; t < weights.size(); ++t) {
        const double scaled = std::clamp(std::floor((weights[t] / sum) * spread), 0.0, spread);
        freq[t] = static_cast<std::uint32_t>(scaled) + 1;
    }
    return settle(std::move(freq), [&](std::uint32_t a, std::uint32_t b) {
        return weights[a] != weights[b] ? weights[a] > weights[b] : a < b;
    });
}

QuantizedCdf quantize_rational(std::span<const u128> numerators, u128 denominator) {
    check_vocab(numerators.size());
    if (denominator == 0) throw DomainError("zero denominator");
    const u128 spread = kCdfTotal - numerators.size();
    std::vector<std::uint32_t> freq(numerators.size());
    for (std::size_t t = 0; t < numerators.size(); ++t) {
        if (numerators[t] > denominator) throw DomainError("numerator exceeds denominator");
        freq[t] = static_cast<std::uint32_t>(numerators[t] * spread / denominator) + 1;
    }
    return settle(std::move(freq), [&](std::uint32_t a, std::uint32_t b) {
        return numerators[a] != numerators[b] ? numerators[a] > numerators[b] : a < b;
    });
}

QuantizedCdf uniform_cdf(std::uint32_t vocab_size) {
    check_vocab(vocab_size);
    std::vector<u128> ones(vocab_size, 1);
    return quantize_rational(ones, vocab_size);
}

std::string_view to_string(ModelId id) {
    switch (id) {
    case ModelId::uniform: return "uniform";
    case ModelId::adaptive_ctx: return "adaptive_ctx";
    case ModelId::tiny_transformer: return "tiny_transformer";
    case ModelId::external_bridge: return "external_bridge";
    }
    return "unknown";
}

ModelId parse_model_id(std::string_view name) {
    if (name == "uniform") return ModelId::uniform;
    if (name == "adaptive" || name == "adaptive_ctx") return ModelId::adaptive_ctx;
    if (name == "transformer" || name == "tiny_transformer") return ModelId::tiny_transformer;
    if (name == "bridge" || name == "external" || name == "external_bridge") return ModelId::external_bridge;
    throw ParameterError("unknown model '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// uniform

namespace {

class UniformSession final : public ModelSession {
public:
    explicit UniformSession(std::uint32_t vocab) : cdf_(uniform_cdf(vocab)) {}
    std::uint32_t vocab_size() const override { return cdf_.vocab_size(); }
    QuantizedCdf next_cdf() override { return cdf_; }
    void push_token(TokenId t) override {
        if (t >= vocab_size()) throw DomainError("token " + std::to_string(t) + " outside vocabulary");
    }
    void reset() override {}

private:
    QuantizedCdf cdf_;
};

} // namespace

UniformModel::UniformModel(std::uint32_t vocab_size) : vocab_(vocab_size) { check_vocab(vocab_size); }

std::uint64_t UniformModel::params_digest() const {
    Fnv1a h;
    h.add_string("uniform");
    h.add_u32(vocab_);
    return h.value();
}

std::unique_ptr<ModelSession> UniformModel::start_session() const { return std::make_unique<UniformSession>(vocab_); }

// ---------------------------------------------------------------------------
// adaptive_ctx

namespace {

constexpr std::uint64_t kNoToken = 0xFFFF;

struct ContextCounts {
    std::uint32_t total = 0;
    std::vector<std::pair<TokenId, std::uint32_t>> counts;

    void add(TokenId t) {
        auto it = std::find_if(counts.begin(), counts.end(), [t](const auto& e) { return e.first == t; });
        if (it == counts.end()) {
            counts.emplace_back(t, 1);
        } else {
            ++it->second;
        }
        ++total;
        if (total >= AdaptiveContextModel::kCountLimit) {
            total = 0;
            for (auto& e : counts) {
                e.second = (e.second + 1) / 2;
                total += e.second;
            }
        }
    }
};

class AdaptiveSession final : public ModelSession {
public:
    AdaptiveSession(std::uint32_t vocab, int order)
        : vocab_(vocab), order_(order), contexts_(static_cast<std::size_t>(order)), zero_counts_(vocab, 0),
          touched_mark_(vocab, 0), accum_(vocab, 0) {}

    std::uint32_t vocab_size() const override { return vocab_; }

    void reset() override {
        for (auto& m : contexts_) m.clear();
        for (auto t : touched_) zero_counts_[t] = 0, touched_mark_[t] = 0;
        touched_.clear();
        zero_total_ = 0;
        history_.clear();
    }

    void push_token(TokenId t) override {
        if (t >= vocab_) throw DomainError("token " + std::to_string(t) + " outside vocabulary");
        for (int k = 1; k <= order_; ++k) contexts_[static_cast<std::size_t>(k - 1)][context_key(k)].add(t);
        if (zero_counts_[t] == 0) {
            touched_.push_back(t);
            touched_mark_[t] = 1;
        }
        ++zero_counts_[t];
        ++zero_total_;
        if (zero_total_ >= AdaptiveContextModel::kCountLimit) {
            zero_total_ = 0;
            for (auto u : touched_) {
                zero_counts_[u] = (zero_counts_[u] + 1) / 2;
                zero_total_ += zero_counts_[u];
            }
        }
        history_.push_back(t);
        if (history_.size() > static_cast<std::size_t>(order_)) history_.erase(history_.begin());
    }

    QuantizedCdf next_cdf() override {
        const std::size_t orders = static_cast<std::size_t>(order_) + 1;
        // Active context per order (nullptr = never seen) and A_k = 2 n_k + V.
        std::vector<const ContextCounts*> active(orders, nullptr);
        std::vector<u128> a(orders);
        a[0] = 2 * u128{zero_total_} + vocab_;
        for (int k = 1; k <= order_; ++k) {
            const auto& m = contexts_[static_cast<std::size_t>(k - 1)];
            const auto it = m.find(context_key(k));
            if (it != m.end()) active[static_cast<std::size_t>(k)] = &it->second;
            a[static_cast<std::size_t>(k)] = 2 * u128{it != m.end() ? it->second.total : 0} + vocab_;
        }
        // numerator(t) = sum_k W_k (2 c_k(t) + 1) prod_{j != k} A_j
        std::vector<u128> coeff(orders);
        u128 base = 0;
        u128 denominator = 1;
        for (std::size_t k = 0; k < orders; ++k) {
            u128 others = 1;
            for (std::size_t j = 0; j < orders; ++j) {
                if (j != k) others *= a[j];
            }
            coeff[k] = AdaptiveContextModel::scaled_weight(order_, static_cast<int>(k)) * others;
            base += coeff[k];
            denominator *= a[k];
        }
        denominator *= AdaptiveContextModel::scaled_weight(order_, -1);

        for (auto t : touched_) accum_[t] = base + 2 * coeff[0] * zero_counts_[t];
        for (std::size_t k = 1; k < orders; ++k) {
            if (active[k] == nullptr) continue;
            for (const auto& [t, c] : active[k]->counts) accum_[t] += 2 * coeff[k] * c;
        }

        const u128 spread = kCdfTotal - vocab_;
        const auto base_freq = static_cast<std::uint32_t>(base * spread / denominator) + 1;
        std::vector<std::uint32_t> freq(vocab_, base_freq);
        std::int64_t deficit = static_cast<std::int64_t>(kCdfTotal) - std::int64_t{base_freq} * vocab_;
        for (auto t : touched_) {
            freq[t] = static_cast<std::uint32_t>(accum_[t] * spread / denominator) + 1;
            deficit -= std::int64_t{freq[t]} - base_freq;
        }

        // Every touched token outranks every untouched one (its numerator is
        // strictly larger); untouched tokens tie and rank by id.
        if (deficit > 0) {
            const auto rounds = static_cast<std::uint32_t>(deficit / vocab_);
            auto rem = static_cast<std::size_t>(deficit % vocab_);
            if (rounds != 0) {
                for (auto& f : freq) f += rounds;
            }
            ranked_ = touched_;
            const auto before = [&](TokenId x, TokenId y) { return accum_[x] != accum_[y] ? accum_[x] > accum_[y] : x < y; };
            if (rem < ranked_.size()) {
                std::nth_element(ranked_.begin(), ranked_.begin() + static_cast<std::ptrdiff_t>(rem), ranked_.end(), before);
                ranked_.resize(rem);
            }
            for (auto t : ranked_) ++freq[t];
            rem -= ranked_.size();
            for (TokenId t = 0; rem > 0 && t < vocab_; ++t) {
                if (!touched_mark_[t]) {
                    ++freq[t];
                    --rem;
                }
            }
        }
        std::vector<std::uint32_t> cum(vocab_ + 1, 0);
        for (std::uint32_t t = 0; t < vocab_; ++t) cum[t + 1] = cum[t] + freq[t];
        return QuantizedCdf(std::move(cum));
    }

private:
    // Packs the last k tokens (oldest first, padded with kNoToken) into 64 bits.
    std::uint64_t context_key(int k) const {
        std::uint64_t key = 0;
        const auto have = static_cast<int>(history_.size());
        for (int i = k; i >= 1; --i) {
            const std::uint64_t tok = i <= have ? history_[static_cast<std::size_t>(have - i)] : kNoToken;
            key = (key << 16) | tok;
        }
        return key;
    }

    std::uint32_t vocab_;
    int order_;
    std::vector<std::unordered_map<std::uint64_t, ContextCounts>> contexts_; // orders 1..N
    std::vector<std::uint32_t> zero_counts_;
    std::uint32_t zero_total_ = 0;
    std::vector<TokenId> touched_;     // tokens with a nonzero order-0 count
    std::vector<std::uint8_t> touched_mark_;
    std::vector<TokenId> history_;
    std::vector<u128> accum_;           // scratch numerators, valid for touched tokens
    std::vector<TokenId> ranked_;
};

} // namespace

AdaptiveContextModel::AdaptiveContextModel(std::uint32_t vocab_size, int order) : vocab_(vocab_size), order_(order) {
    check_vocab(vocab_size);
    if (order < 0 || order > 3) throw ParameterError("adaptive context order must lie in [0, 3]");
}

std::uint64_t AdaptiveContextModel::scaled_weight(int order, int k) {
    std::uint64_t scale = 1;
    for (int i = 0; i < order; ++i) scale *= 10;
    if (k < 0) return scale; // total
    if (k == 0) return 1;
    std::uint64_t w = 9;
    for (int i = 1; i < k; ++i) w *= 10;
    return w;
}

std::uint64_t AdaptiveContextModel::params_digest() const {
    Fnv1a h;
    h.add_string("adaptive_ctx");
    h.add_u32(vocab_);
    h.add_u32(static_cast<std::uint32_t>(order_));
    return h.value();
}

std::unique_ptr<ModelSession> AdaptiveContextModel::start_session() const {
    return std::make_unique<AdaptiveSession>(vocab_, order_);
}

// ---------------------------------------------------------------------------

std::shared_ptr<const ProbabilityModel> make_model(ModelId id, const ModelParams& params) {
    switch (id) {
    case ModelId::uniform: return std::make_shared<UniformModel>(params.vocab_size);
    case ModelId::adaptive_ctx: return std::make_shared<AdaptiveContextModel>(params.vocab_size, params.context_order);
    case ModelId::tiny_transformer: {
        auto model = std::make_shared<TransformerModel>(load_weights(params.weights_path));
        if (params.vocab_size != 0 && model->vocab_size() != params.vocab_size) {
            throw LoadError("weights declare vocabulary " + std::to_string(model->vocab_size()) + ", codec needs " +
                            std::to_string(params.vocab_size));
        }
        return model;
    }
    case ModelId::external_bridge: {
        std::string command = params.bridge_command;
        if (command.empty()) {
            if (const char* env = std::getenv("KPCC_BRIDGE_CMD")) command = env;
        }
        if (command.empty()) throw ParameterError("external bridge needs a command (KPCC_BRIDGE_CMD)");
        auto model = std::make_shared<BridgeModel>(command, params.vocab_size, params.bridge_timeout_ms);
        model->probe();
        return model;
    }
    }
    throw ParameterError("unknown model id");
}

std::unique_ptr<ModelSession> session_start(ModelId id, const ModelParams& params) {
    return make_model(id, params)->start_session();
}

} // namespace kpcc
