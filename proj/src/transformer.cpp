// SPDX-License-Identifier: Apache-2.0

#include "kpcc/transformer.hpp"

#include <cmath>
#include <random>

#include "kpcc/byte_io.hpp"
#include "kpcc/digest.hpp"
#include "kpcc/errors.hpp"

namespace kpcc {

std::size_t Tensor::numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

namespace {

constexpr float kLayerNormEps = 1e-5f;
constexpr const char* kLinearNames[] = {"attn.q", "attn.k", "attn.v", "attn.o", "mlp.fc", "mlp.proj"};

std::string block_name(std::uint32_t i, const char* leaf) { return "blk." + std::to_string(i) + "." + leaf; }

std::uint32_t hidden_dim(const TransformerWeights& w) {
    const auto it = w.tensors.find("blk.0.mlp.fc.weight");
    if (it == w.tensors.end() || it->second.dims.size() != 2) throw LoadError("missing blk.0.mlp.fc.weight");
    return it->second.dims[0];
}

// Expected shape of every required tensor.
std::map<std::string, std::vector<std::uint32_t>> expected_shapes(const TransformerConfig& c, std::uint32_t hidden) {
    std::map<std::string, std::vector<std::uint32_t>> s;
    s["tok_emb"] = {c.vocab_size, c.dim};
    s["pos_emb"] = {c.max_ctx, c.dim};
    for (std::uint32_t i = 0; i < c.layers; ++i) {
        for (const char* ln : {"ln1", "ln2"}) {
            s[block_name(i, ln) + ".weight"] = {c.dim};
            s[block_name(i, ln) + ".bias"] = {c.dim};
        }
        for (const char* p : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
            s[block_name(i, p) + ".weight"] = {c.dim, c.dim};
            s[block_name(i, p) + ".bias"] = {c.dim};
        }
        s[block_name(i, "mlp.fc.weight")] = {hidden, c.dim};
        s[block_name(i, "mlp.fc.bias")] = {hidden};
        s[block_name(i, "mlp.proj.weight")] = {c.dim, hidden};
        s[block_name(i, "mlp.proj.bias")] = {c.dim};
    }
    s["ln_f.weight"] = {c.dim};
    s["ln_f.bias"] = {c.dim};
    return s;
}

void validate_config(const TransformerConfig& c) {
    if (c.vocab_size == 0 || c.vocab_size >= kCdfTotal) throw LoadError("weights vocabulary outside [1, 65535]");
    if (c.dim == 0 || c.layers == 0 || c.heads == 0 || c.max_ctx == 0) throw LoadError("weights header has a zero dimension");
    if (c.dim % c.heads != 0) throw LoadError("dim is not divisible by heads");
    if (c.adapter_rank > 0 && !(c.adapter_alpha > 0.0f)) throw LoadError("adapter_alpha must be positive");
}

void validate_tensors(const TransformerWeights& w) {
    const auto& c = w.config;
    const std::uint32_t hidden = hidden_dim(w);
    const auto shapes = expected_shapes(c, hidden);
    for (const auto& [name, dims] : shapes) {
        const auto it = w.tensors.find(name);
        if (it == w.tensors.end()) throw LoadError("weights lack tensor " + name);
        if (it->second.dims != dims) throw LoadError("tensor " + name + " has the wrong shape");
    }
    for (const auto& [name, t] : w.tensors) {
        if (t.data.size() != t.numel()) throw LoadError("tensor " + name + " data size mismatch");
        if (shapes.contains(name)) continue;
        if (name == "head.weight") {
            if (t.dims != std::vector<std::uint32_t>{c.vocab_size, c.dim}) throw LoadError("head.weight has the wrong shape");
            continue;
        }
        const bool is_a = name.ends_with(".lora_a");
        const bool is_b = name.ends_with(".lora_b");
        if (!is_a && !is_b) throw LoadError("unknown tensor " + name);
        if (c.adapter_rank == 0) throw LoadError("adapter tensor " + name + " present but adapter_rank is 0");
        const std::string base = name.substr(0, name.size() - 7) + ".weight";
        const auto base_it = shapes.find(base);
        if (base_it == shapes.end()) throw LoadError("adapter " + name + " targets no linear layer");
        const std::string partner = name.substr(0, name.size() - 1) + (is_a ? "b" : "a");
        if (!w.tensors.contains(partner)) throw LoadError("adapter " + name + " lacks its partner " + partner);
        const auto out = base_it->second[0];
        const auto in = base_it->second[1];
        const std::vector<std::uint32_t> want = is_a ? std::vector<std::uint32_t>{c.adapter_rank, in}
                                                     : std::vector<std::uint32_t>{out, c.adapter_rank};
        if (t.dims != want) throw LoadError("adapter " + name + " has the wrong shape");
    }
}

MatrixXfR to_matrix(const Tensor& t) {
    MatrixXfR m(t.dims[0], t.dims[1]);
    std::copy(t.data.begin(), t.data.end(), m.data());
    return m;
}

VectorXf to_vector(const Tensor& t) {
    VectorXf v(static_cast<Eigen::Index>(t.data.size()));
    std::copy(t.data.begin(), t.data.end(), v.data());
    return v;
}

// W + (alpha / r) * B * A when an adapter pair exists.
MatrixXfR merged_linear(const TransformerWeights& w, const std::string& prefix) {
    MatrixXfR m = to_matrix(w.tensors.at(prefix + ".weight"));
    const auto a = w.tensors.find(prefix + ".lora_a");
    if (a != w.tensors.end()) {
        const MatrixXfR am = to_matrix(a->second);
        const MatrixXfR bm = to_matrix(w.tensors.at(prefix + ".lora_b"));
        const float scale = w.config.adapter_alpha / static_cast<float>(w.config.adapter_rank);
        const MatrixXfR delta = bm * am;
        m += scale * delta;
    }
    return m;
}

void layer_norm(const VectorXf& x, const VectorXf& w, const VectorXf& b, VectorXf& out) {
    const auto n = static_cast<float>(x.size());
    const float mean = x.sum() / n;
    const VectorXf centered = x.array() - mean;
    const float var = centered.squaredNorm() / n;
    out = (centered * (1.0f / std::sqrt(var + kLayerNormEps))).cwiseProduct(w) + b;
}

float gelu(float x) {
    constexpr float k = 0.7978845608028654f; // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

// Keys and values of every position computed so far, per layer.
struct KvCache {
    std::vector<MatrixXfR> keys;
    std::vector<MatrixXfR> values;
    std::size_t length = 0;

    KvCache(const TransformerConfig& c) {
        for (std::uint32_t l = 0; l < c.layers; ++l) {
            keys.emplace_back(c.max_ctx, c.dim);
            values.emplace_back(c.max_ctx, c.dim);
        }
    }
};

// Runs one position through the network, appending to `cache`, and returns
// the logits. Both full forward passes and incremental sessions go through
// here so their results are bit-identical.
VectorXf step(const TransformerModel& m, TokenId token, KvCache& cache) {
    const auto& c = m.config();
    const auto pos = static_cast<Eigen::Index>(cache.length);
    const auto head_dim = static_cast<Eigen::Index>(c.dim / c.heads);
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));

    VectorXf h = m.tok_emb.row(token).transpose() + m.pos_emb.row(pos).transpose();
    VectorXf a, q, k, v, attn(c.dim), mlp_in, hidden;
    std::vector<float> scores(static_cast<std::size_t>(pos) + 1);
    for (std::uint32_t l = 0; l < c.layers; ++l) {
        const auto& blk = m.blocks[l];
        layer_norm(h, blk.ln1_w, blk.ln1_b, a);
        q = blk.wq * a + blk.bq;
        k = blk.wk * a + blk.bk;
        v = blk.wv * a + blk.bv;
        cache.keys[l].row(pos) = k.transpose();
        cache.values[l].row(pos) = v.transpose();
        for (std::uint32_t hd = 0; hd < c.heads; ++hd) {
            const Eigen::Index off = hd * head_dim;
            float max_score = -std::numeric_limits<float>::infinity();
            for (Eigen::Index j = 0; j <= pos; ++j) {
                const float s = q.segment(off, head_dim).dot(cache.keys[l].row(j).segment(off, head_dim).transpose()) * inv_sqrt;
                scores[static_cast<std::size_t>(j)] = s;
                max_score = std::max(max_score, s);
            }
            float denom = 0.0f;
            for (Eigen::Index j = 0; j <= pos; ++j) {
                auto& s = scores[static_cast<std::size_t>(j)];
                s = std::exp(s - max_score);
                denom += s;
            }
            VectorXf acc = VectorXf::Zero(head_dim);
            for (Eigen::Index j = 0; j <= pos; ++j) {
                acc += (scores[static_cast<std::size_t>(j)] / denom) * cache.values[l].row(j).segment(off, head_dim).transpose();
            }
            attn.segment(off, head_dim) = acc;
        }
        h += blk.wo * attn + blk.bo;
        layer_norm(h, blk.ln2_w, blk.ln2_b, mlp_in);
        hidden = blk.fc * mlp_in + blk.fc_b;
        hidden = hidden.unaryExpr(&gelu);
        h += blk.proj * hidden + blk.proj_b;
    }
    ++cache.length;
    VectorXf out;
    layer_norm(h, m.lnf_w, m.lnf_b, out);
    return m.head * out;
}

QuantizedCdf cdf_from_logits(const VectorXf& logits) {
    const float max_logit = logits.maxCoeff();
    std::vector<double> weights(static_cast<std::size_t>(logits.size()));
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        weights[static_cast<std::size_t>(i)] = static_cast<double>(std::exp(logits[i] - max_logit));
    }
    return quantize_weights(weights);
}

class TransformerSession final : public ModelSession {
public:
    TransformerSession(const TransformerModel& model, std::shared_ptr<const TransformerModel> owner)
        : owner_(std::move(owner)), model_(model), cache_(model.config()) {}

    std::uint32_t vocab_size() const override { return model_.vocab_size(); }

    void push_token(TokenId t) override {
        if (t >= vocab_size()) throw DomainError("token " + std::to_string(t) + " outside vocabulary");
        window_.push_back(t);
        if (window_.size() > model_.config().max_ctx) {
            window_.erase(window_.begin());
            cache_.length = 0; // positions shifted; recompute lazily
        }
    }

    QuantizedCdf next_cdf() override {
        if (window_.empty()) return uniform_cdf(vocab_size());
        while (cache_.length < window_.size()) last_logits_ = step(model_, window_[cache_.length], cache_);
        return cdf_from_logits(last_logits_);
    }

    void reset() override {
        window_.clear();
        cache_.length = 0;
    }

private:
    std::shared_ptr<const TransformerModel> owner_; // null when the model is not shared-owned
    const TransformerModel& model_;
    KvCache cache_;
    std::vector<TokenId> window_;
    VectorXf last_logits_;
};

} // namespace

std::vector<std::string> required_tensor_names(const TransformerConfig& config) {
    std::vector<std::string> names;
    for (const auto& [name, dims] : expected_shapes(config, 1)) names.push_back(name);
    return names;
}

TransformerWeights parse_weights(std::span<const std::uint8_t> bytes) {
    ByteReader<LoadError> r(bytes);
    if (r.str(4) != "KPTW") throw LoadError("weights file lacks KPTW magic");
    if (const auto version = r.u8(); version != kWeightsVersion) {
        throw LoadError("unsupported weights version " + std::to_string(version));
    }
    TransformerWeights w;
    auto& c = w.config;
    c.vocab_size = r.u32();
    c.dim = r.u32();
    c.layers = r.u32();
    c.heads = r.u32();
    c.max_ctx = r.u32();
    c.adapter_rank = r.u32();
    c.adapter_alpha = r.f32();
    validate_config(c);
    while (r.remaining() > 0) {
        const std::uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        const std::uint8_t rank = r.u8();
        if (rank == 0 || rank > 4) throw LoadError("tensor " + name + " has rank " + std::to_string(rank));
        Tensor t;
        std::uint64_t n = 1;
        for (std::uint8_t i = 0; i < rank; ++i) {
            t.dims.push_back(r.u32());
            n *= t.dims.back();
        }
        if (n * 4 > r.remaining()) throw LoadError("tensor " + name + " data truncated");
        t.data.resize(n);
        for (auto& x : t.data) x = r.f32();
        if (!w.tensors.emplace(std::move(name), std::move(t)).second) throw LoadError("duplicate tensor name");
    }
    validate_tensors(w);
    return w;
}

TransformerWeights load_weights(const std::string& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    return parse_weights(bytes);
}

std::vector<std::uint8_t> serialize_weights(const TransformerWeights& w) {
    ByteWriter out;
    out.str("KPTW");
    out.u8(kWeightsVersion);
    const auto& c = w.config;
    out.u32(c.vocab_size);
    out.u32(c.dim);
    out.u32(c.layers);
    out.u32(c.heads);
    out.u32(c.max_ctx);
    out.u32(c.adapter_rank);
    out.f32(c.adapter_alpha);
    for (const auto& [name, t] : w.tensors) {
        out.u16(static_cast<std::uint16_t>(name.size()));
        out.str(name);
        out.u8(static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) out.u32(d);
        for (float x : t.data) out.f32(x);
    }
    return out.take();
}

void save_weights(const TransformerWeights& w, const std::string& path) { write_file_bytes(path, serialize_weights(w)); }

TransformerWeights random_weights(const TransformerConfig& config, std::uint64_t seed, float scale) {
    validate_config(config);
    TransformerWeights w;
    w.config = config;
    std::mt19937_64 rng(seed);
    // portable uniform in [-scale, scale)
    auto draw = [&] { return scale * (static_cast<float>(rng() >> 40) * (2.0f / 16777216.0f) - 1.0f); };
    const std::uint32_t hidden = 4 * config.dim;
    for (const auto& [name, dims] : expected_shapes(config, hidden)) {
        Tensor t;
        t.dims = dims;
        t.data.resize(t.numel());
        const bool is_norm_weight = name.find("ln") != std::string::npos && name.ends_with(".weight");
        for (auto& x : t.data) x = is_norm_weight ? 1.0f + draw() : draw();
        w.tensors.emplace(name, std::move(t));
    }
    if (config.adapter_rank > 0) {
        for (std::uint32_t i = 0; i < config.layers; ++i) {
            for (const char* lin : kLinearNames) {
                const auto& base = w.tensors.at(block_name(i, lin) + ".weight");
                Tensor a{{config.adapter_rank, base.dims[1]}, {}};
                Tensor b{{base.dims[0], config.adapter_rank}, {}};
                a.data.resize(a.numel());
                b.data.resize(b.numel());
                for (auto& x : a.data) x = draw();
                for (auto& x : b.data) x = draw();
                w.tensors.emplace(block_name(i, lin) + ".lora_a", std::move(a));
                w.tensors.emplace(block_name(i, lin) + ".lora_b", std::move(b));
            }
        }
    }
    return w;
}

TransformerModel::TransformerModel(const TransformerWeights& weights) : config_(weights.config) {
    validate_config(config_);
    validate_tensors(weights);
    const auto& t = weights.tensors;
    tok_emb = to_matrix(t.at("tok_emb"));
    pos_emb = to_matrix(t.at("pos_emb"));
    head = t.contains("head.weight") ? to_matrix(t.at("head.weight")) : tok_emb;
    for (std::uint32_t i = 0; i < config_.layers; ++i) {
        Block b;
        b.ln1_w = to_vector(t.at(block_name(i, "ln1.weight")));
        b.ln1_b = to_vector(t.at(block_name(i, "ln1.bias")));
        b.ln2_w = to_vector(t.at(block_name(i, "ln2.weight")));
        b.ln2_b = to_vector(t.at(block_name(i, "ln2.bias")));
        b.wq = merged_linear(weights, block_name(i, "attn.q"));
        b.wk = merged_linear(weights, block_name(i, "attn.k"));
        b.wv = merged_linear(weights, block_name(i, "attn.v"));
        b.wo = merged_linear(weights, block_name(i, "attn.o"));
        b.bq = to_vector(t.at(block_name(i, "attn.q.bias")));
        b.bk = to_vector(t.at(block_name(i, "attn.k.bias")));
        b.bv = to_vector(t.at(block_name(i, "attn.v.bias")));
        b.bo = to_vector(t.at(block_name(i, "attn.o.bias")));
        b.fc = merged_linear(weights, block_name(i, "mlp.fc"));
        b.proj = merged_linear(weights, block_name(i, "mlp.proj"));
        b.fc_b = to_vector(t.at(block_name(i, "mlp.fc.bias")));
        b.proj_b = to_vector(t.at(block_name(i, "mlp.proj.bias")));
        blocks.push_back(std::move(b));
    }
    lnf_w = to_vector(t.at("ln_f.weight"));
    lnf_b = to_vector(t.at("ln_f.bias"));
    digest_ = fnv1a(serialize_weights(weights));
}

MatrixXfR TransformerModel::forward(std::span<const TokenId> tokens) const {
    if (tokens.size() > config_.max_ctx) throw ParameterError("forward: context longer than max_ctx");
    KvCache cache(config_);
    MatrixXfR logits(static_cast<Eigen::Index>(tokens.size()), config_.vocab_size);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= config_.vocab_size) throw DomainError("token outside vocabulary");
        logits.row(static_cast<Eigen::Index>(i)) = step(*this, tokens[i], cache).transpose();
    }
    return logits;
}

std::unique_ptr<ModelSession> TransformerModel::start_session() const {
    return std::make_unique<TransformerSession>(*this, weak_from_this().lock());
}

} // namespace kpcc
