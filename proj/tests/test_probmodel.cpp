// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "kpcc/errors.hpp"
#include "kpcc/probmodel.hpp"

using namespace kpcc;

namespace {

// Straightforward re-statement of the adaptive estimator: counts kept in
// ordered maps keyed by the literal context, numerators formed per token.
class EstimatorOracle {
public:
    EstimatorOracle(std::uint32_t vocab, int order) : vocab_(vocab), order_(order) {}

    void push(TokenId t) {
        for (int k = 0; k <= order_; ++k) ++counts_[context(k)][t];
        history_.push_back(t);
    }

    std::vector<std::uint32_t> cumfreq() const {
        static const std::vector<std::vector<u128>> weights = {{1}, {1, 9}, {1, 9, 90}, {1, 9, 90, 900}};
        const auto& w = weights[static_cast<std::size_t>(order_)];
        u128 scale = 0;
        for (auto x : w) scale += x;

        std::vector<u128> a(static_cast<std::size_t>(order_) + 1);
        std::vector<const std::map<TokenId, u128>*> tables(a.size(), nullptr);
        for (int k = 0; k <= order_; ++k) {
            u128 n = 0;
            const auto it = counts_.find(context(k));
            if (it != counts_.end()) {
                tables[static_cast<std::size_t>(k)] = &it->second;
                for (const auto& [tok, c] : it->second) n += c;
            }
            a[static_cast<std::size_t>(k)] = 2 * n + vocab_;
        }
        u128 den = scale;
        for (auto x : a) den *= x;

        std::vector<u128> num(vocab_, 0);
        for (TokenId t = 0; t < vocab_; ++t) {
            for (std::size_t k = 0; k < a.size(); ++k) {
                u128 c = 0;
                if (tables[k]) {
                    const auto it = tables[k]->find(t);
                    if (it != tables[k]->end()) c = it->second;
                }
                u128 term = w[k] * (2 * c + 1);
                for (std::size_t j = 0; j < a.size(); ++j) {
                    if (j != k) term *= a[j];
                }
                num[t] += term;
            }
        }
        // floor(p * (65536 - V)) + 1, remainder to the most probable, lower id first
        std::vector<std::uint32_t> f(vocab_);
        std::int64_t left = 65536;
        for (TokenId t = 0; t < vocab_; ++t) {
            f[t] = static_cast<std::uint32_t>(num[t] * (65536 - vocab_) / den) + 1;
            left -= f[t];
        }
        REQUIRE(left >= 0);
        REQUIRE(left < static_cast<std::int64_t>(vocab_));
        std::vector<TokenId> order(vocab_);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(), [&](TokenId x, TokenId y) { return num[x] > num[y]; });
        for (std::int64_t i = 0; i < left; ++i) ++f[order[static_cast<std::size_t>(i)]];
        std::vector<std::uint32_t> cum{0};
        for (auto x : f) cum.push_back(cum.back() + x);
        return cum;
    }

private:
    std::vector<std::int64_t> context(int k) const {
        std::vector<std::int64_t> key{k};
        for (int i = k; i >= 1; --i) {
            const auto have = static_cast<int>(history_.size());
            key.push_back(i <= have ? history_[static_cast<std::size_t>(have - i)] : -1);
        }
        return key;
    }

    std::uint32_t vocab_;
    int order_;
    std::vector<TokenId> history_;
    std::map<std::vector<std::int64_t>, std::map<TokenId, u128>> counts_;
};

std::vector<std::uint32_t> cum_of(const QuantizedCdf& c) { return {c.cumfreq().begin(), c.cumfreq().end()}; }

void check_valid(const QuantizedCdf& c, std::uint32_t vocab) {
    REQUIRE(c.cumfreq().size() == vocab + 1);
    REQUIRE(c.cumfreq().front() == 0);
    REQUIRE(c.cumfreq().back() == 65536);
    for (std::uint32_t t = 0; t < vocab; ++t) REQUIRE(c.freq(t) >= 1);
}

} // namespace

TEST_CASE("uniform cdf with exact division") {
    CHECK(cum_of(uniform_cdf(4)) == std::vector<std::uint32_t>{0, 16384, 32768, 49152, 65536});
    const auto u = uniform_cdf(258);
    check_valid(u, 258);
    // 65536 = 254 * 258 + 4: the first four ids get the extra unit
    CHECK(u.freq(0) == 255);
    CHECK(u.freq(3) == 255);
    CHECK(u.freq(4) == 254);
}

TEST_CASE("QuantizedCdf validation and lookup") {
    CHECK_THROWS_AS(QuantizedCdf({0, 100}), DomainError);
    CHECK_THROWS_AS(QuantizedCdf({0, 0, 65536}), DomainError);
    CHECK_THROWS_AS(QuantizedCdf({1, 65536}), DomainError);
    const QuantizedCdf c({0, 10, 65000, 65536});
    CHECK(c.find(0) == 0);
    CHECK(c.find(9) == 0);
    CHECK(c.find(10) == 1);
    CHECK(c.find(64999) == 1);
    CHECK(c.find(65000) == 2);
    CHECK(c.find(65535) == 2);
    CHECK(c.low(2) == 65000);
    CHECK(c.freq(2) == 536);
    CHECK(code_length_bits(c, 1) == doctest::Approx(16.0 - std::log2(64990.0)));
}

TEST_CASE("quantize_weights rule") {
    // 3 tokens with weights 1,1,2: spread 65533 -> 16383.25, 16383.25, 32766.5
    const auto q = quantize_weights(std::vector<double>{1, 1, 2});
    // floors+1: 16384, 16384, 32767 = 65535; one unit left -> highest weight
    CHECK(cum_of(q) == std::vector<std::uint32_t>{0, 16384, 32768, 65536});
    CHECK_THROWS_AS(quantize_weights(std::vector<double>{1, -1}), DomainError);
    CHECK_THROWS_AS(quantize_weights(std::vector<double>{0, 0}), DomainError);
    CHECK_THROWS_AS(quantize_weights(std::vector<double>{1, std::nan("")}), DomainError);
    CHECK_THROWS_AS(quantize_weights(std::vector<double>{}), ParameterError);
    // a one-hot distribution still leaves every other token one unit
    std::vector<double> hot(1000, 0.0);
    hot[7] = 1.0;
    const auto h = quantize_weights(hot);
    check_valid(h, 1000);
    CHECK(h.freq(7) == 65536 - 999);
}

TEST_CASE("quantize_rational equals the exact rule") {
    const std::vector<u128> num{1, 2, 3, 4};
    const auto q = quantize_rational(num, 10);
    // spread 65532: 6553.2, 13106.4, 19659.6, 26212.8 -> floor+1 = 6554, 13107, 19660, 26213 (sum 65534)
    CHECK(cum_of(q) == std::vector<std::uint32_t>{0, 6554, 6554 + 13107, 6554 + 13107 + 19661, 65536});
}

TEST_CASE("quantization fuzz: valid tables that keep the argmax") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100000; ++trial) {
        const std::uint32_t vocab = 1 + static_cast<std::uint32_t>(rng() % (trial % 100 == 0 ? 5000 : 300));
        std::vector<double> w(vocab);
        for (auto& x : w) x = trial % 3 == 0 ? std::pow(u(rng), 8.0) : u(rng);
        w[rng() % vocab] += 1e-9;
        const auto q = quantize_weights(w);
        REQUIRE(q.cumfreq().back() == 65536);
        REQUIRE(q.cumfreq().size() == vocab + 1);
        const auto best = static_cast<TokenId>(std::max_element(w.begin(), w.end()) - w.begin());
        std::uint32_t top = 0;
        for (TokenId t = 0; t < vocab; ++t) {
            REQUIRE(q.freq(t) >= 1);
            top = std::max(top, q.freq(t));
        }
        REQUIRE(q.freq(best) == top);
    }
}

TEST_CASE("model ids and factory") {
    CHECK(parse_model_id("adaptive") == ModelId::adaptive_ctx);
    CHECK(parse_model_id("uniform") == ModelId::uniform);
    CHECK(parse_model_id("bridge") == ModelId::external_bridge);
    CHECK_THROWS_AS(parse_model_id("lstm"), ParameterError);

    ModelParams p;
    p.vocab_size = 258;
    auto s = session_start(ModelId::uniform, p);
    const auto before = cum_of(s->next_cdf());
    s->push_token(0);
    CHECK(cum_of(s->next_cdf()) == before);
    CHECK_THROWS_AS(s->push_token(258), DomainError);

    p.context_order = 4;
    CHECK_THROWS_AS(make_model(ModelId::adaptive_ctx, p), ParameterError);
    p.context_order = 2;
    p.vocab_size = 0;
    CHECK_THROWS_AS(make_model(ModelId::adaptive_ctx, p), ParameterError);
    p.weights_path = "/nonexistent/model.kptw";
    CHECK_THROWS_AS(make_model(ModelId::tiny_transformer, p), LoadError);
}

TEST_CASE("params digests separate configurations") {
    const AdaptiveContextModel a(258, 2), b(258, 3), c(4098, 2);
    CHECK(a.params_digest() != b.params_digest());
    CHECK(a.params_digest() != c.params_digest());
    CHECK(a.params_digest() == AdaptiveContextModel(258, 2).params_digest());
    CHECK(UniformModel(258).params_digest() != UniformModel(4098).params_digest());
    CHECK(UniformModel(258).params_digest() != a.params_digest());
}

TEST_CASE("interpolation weights") {
    CHECK(AdaptiveContextModel::scaled_weight(2, 2) == 90);
    CHECK(AdaptiveContextModel::scaled_weight(2, 1) == 9);
    CHECK(AdaptiveContextModel::scaled_weight(2, 0) == 1);
    CHECK(AdaptiveContextModel::scaled_weight(2, -1) == 100);
    for (int n = 0; n <= 3; ++n) {
        std::uint64_t sum = 0;
        for (int k = 0; k <= n; ++k) sum += AdaptiveContextModel::scaled_weight(n, k);
        CHECK(sum == AdaptiveContextModel::scaled_weight(n, -1));
    }
}

TEST_CASE("adaptive model matches the estimator oracle at every step") {
    std::mt19937_64 rng(12);
    for (int order = 0; order <= 3; ++order) {
        for (std::uint32_t vocab : {5u, 258u}) {
            const AdaptiveContextModel model(vocab, order);
            auto session = model.start_session();
            EstimatorOracle oracle(vocab, order);
            for (int step = 0; step < 300; ++step) {
                REQUIRE(cum_of(session->next_cdf()) == oracle.cumfreq());
                // skewed, repetitive source so that contexts recur
                const TokenId t = static_cast<TokenId>(rng() % 4 == 0 ? rng() % vocab : (step % 3) * 2 % vocab);
                session->push_token(t);
                oracle.push(t);
            }
        }
    }
}

TEST_CASE("order-2 context is exactly the last two tokens") {
    const AdaptiveContextModel model(16, 2);
    auto s = model.start_session();
    EstimatorOracle oracle(16, 2);
    for (TokenId t : {3u, 4u, 5u}) {
        s->push_token(t);
        oracle.push(t);
    }
    CHECK(cum_of(s->next_cdf()) == oracle.cumfreq());
    // after seeing (4,5) -> 6 the model prefers 6 when (4,5) recurs
    s->push_token(6);
    s->push_token(4);
    s->push_token(5);
    const auto c = s->next_cdf();
    for (TokenId t = 0; t < 16; ++t) {
        if (t != 6) CHECK(c.freq(6) > c.freq(t));
    }
}

TEST_CASE("token seen 100 times out of 100 dominates") {
    const AdaptiveContextModel model(258, 2);
    auto s = model.start_session();
    EstimatorOracle oracle(258, 2);
    for (int i = 0; i < 100; ++i) {
        s->push_token(77);
        oracle.push(77);
    }
    const auto c = s->next_cdf();
    CHECK(cum_of(c) == oracle.cumfreq());
    for (TokenId t = 0; t < 258; ++t) CHECK(c.freq(77) >= c.freq(t));
}

TEST_CASE("twin sessions agree for 10^4 steps and reset restores the start state") {
    std::mt19937_64 rng(99);
    const AdaptiveContextModel model(258, 2);
    auto a = model.start_session();
    auto b = model.start_session();
    const auto fresh = cum_of(a->next_cdf());
    for (int i = 0; i < 10000; ++i) {
        const auto ca = a->next_cdf();
        const auto cb = b->next_cdf();
        REQUIRE(cum_of(ca) == cum_of(cb));
        check_valid(ca, 258);
        const TokenId t = static_cast<TokenId>(rng() % 16 == 0 ? rng() % 258 : 3 + rng() % 6);
        a->push_token(t);
        b->push_token(t);
    }
    a->reset();
    CHECK(cum_of(a->next_cdf()) == fresh);
    CHECK_THROWS_AS(a->push_token(258), DomainError);
}

TEST_CASE("valid tables across 10^5 adaptive queries with a large vocabulary") {
    std::mt19937_64 rng(5);
    const AdaptiveContextModel model(4098, 2);
    auto s = model.start_session();
    for (int i = 0; i < 100000; ++i) {
        const auto c = s->next_cdf();
        REQUIRE(c.cumfreq().back() == 65536);
        if (i % 1000 == 0) check_valid(c, 4098);
        s->push_token(static_cast<TokenId>(rng() % 8 == 0 ? rng() % 4098 : 3 + rng() % 40));
    }
}

TEST_CASE("adaptive code length approaches the entropy of an iid source") {
    // 8 active symbols in a 258-token vocabulary, known probabilities
    const std::vector<double> p{0.35, 0.2, 0.15, 0.1, 0.08, 0.06, 0.04, 0.02};
    double entropy = 0.0;
    for (double x : p) entropy -= x * std::log2(x);
    std::mt19937_64 rng(31);
    std::discrete_distribution<int> draw(p.begin(), p.end());
    const AdaptiveContextModel model(258, 2);
    auto s = model.start_session();
    // warm up for 10^5 symbols, then measure the steady-state rate
    const int warmup = 100000, window = 20000;
    double bits = 0.0;
    for (int i = 0; i < warmup + window; ++i) {
        const TokenId t = static_cast<TokenId>(3 + draw(rng));
        if (i >= warmup) bits += code_length_bits(s->next_cdf(), t);
        s->push_token(t);
    }
    const double per_symbol = bits / window;
    MESSAGE("entropy " << entropy << " bits, adaptive " << per_symbol << " bits");
    CHECK(per_symbol >= entropy - 0.01);
    CHECK(per_symbol <= entropy + 0.1);
}

TEST_CASE("count halving keeps tables valid") {
    const AdaptiveContextModel model(10, 1);
    auto s = model.start_session();
    for (std::uint32_t i = 0; i < AdaptiveContextModel::kCountLimit + 10; ++i) s->push_token(i % 97 == 0 ? 1 : 2);
    const auto c = s->next_cdf();
    check_valid(c, 10);
    CHECK(c.freq(2) > c.freq(1));
    CHECK(c.freq(1) > c.freq(0));
}
