// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_TRANSFORMER_HPP
#define KPCC_TRANSFORMER_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kpcc/probmodel.hpp"

namespace kpcc {

using MatrixXfR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorXf = Eigen::VectorXf;

/// Raw tensor as stored in a weights file: row-major f32 with up to 4 dims.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t numel() const;
};

struct TransformerConfig {
    std::uint32_t vocab_size = 0;
    std::uint32_t dim = 0;
    std::uint32_t layers = 0;
    std::uint32_t heads = 0;
    std::uint32_t max_ctx = 0;
    std::uint32_t adapter_rank = 0; // 0 = no low-rank adapters
    float adapter_alpha = 0.0f;
};

/// Contents of a KPTW file.
///
///   "KPTW" | version u8 (=1) | vocab u32 | dim u32 | layers u32 | heads u32 |
///   max_ctx u32 | adapter_rank u32 | adapter_alpha f32 |
///   records until end of file:
///     name_len u16 | name utf-8 | rank u8 | dims u32 x rank | f32 data
///
/// All little-endian. Tensor names, with W stored [out, in]:
///   tok_emb [V, D]           pos_emb [max_ctx, D]
///   blk.{i}.ln1.weight/.bias [D]
///   blk.{i}.attn.{q,k,v,o}.weight [D, D]   .bias [D]
///   blk.{i}.ln2.weight/.bias [D]
///   blk.{i}.mlp.fc.weight [H, D]  .bias [H]
///   blk.{i}.mlp.proj.weight [D, H] .bias [D]
///   ln_f.weight/.bias [D]
///   head.weight [V, D]       optional; tied to tok_emb when absent
/// With adapter_rank r > 0, any linear above may carry `<name>.lora_a` [r, in]
/// and `<name>.lora_b` [out, r]; the effective weight is W + (alpha/r) B A.
struct TransformerWeights {
    TransformerConfig config;
    std::map<std::string, Tensor> tensors;
};

inline constexpr std::uint8_t kWeightsVersion = 1;

TransformerWeights load_weights(const std::string& path);
TransformerWeights parse_weights(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_weights(const TransformerWeights& w);
void save_weights(const TransformerWeights& w, const std::string& path);

/// Names every required tensor must carry for `config`, in canonical order.
std::vector<std::string> required_tensor_names(const TransformerConfig& config);

/// Small random weights (seeded, deterministic) for tests and smoke runs.
TransformerWeights random_weights(const TransformerConfig& config, std::uint64_t seed, float scale = 0.1f);

/// Decoder-only causal transformer: pre-norm attention and GELU MLP blocks,
/// learned absolute positions. Sessions keep a sliding window of max_ctx
/// tokens; the probabilities of the next token are softmax(logits) passed
/// through the fixed quantization rule. An empty context predicts uniformly.
///
/// All arithmetic is single precision, evaluated in one fixed order, so encode
/// and decode agree on one build. Bit equality across platforms is not promised.
class TransformerModel final : public ProbabilityModel, public std::enable_shared_from_this<TransformerModel> {
public:
    explicit TransformerModel(const TransformerWeights& weights);

    ModelId id() const override { return ModelId::tiny_transformer; }
    std::uint32_t vocab_size() const override { return config_.vocab_size; }
    std::uint64_t params_digest() const override { return digest_; }
    std::unique_ptr<ModelSession> start_session() const override;

    const TransformerConfig& config() const { return config_; }

    struct Block {
        VectorXf ln1_w, ln1_b, ln2_w, ln2_b;
        MatrixXfR wq, wk, wv, wo;
        VectorXf bq, bk, bv, bo;
        MatrixXfR fc, proj;
        VectorXf fc_b, proj_b;
    };

    /// Logits for every position of `tokens` (at most max_ctx), computed from
    /// scratch. Row i is the distribution after tokens[0..i].
    MatrixXfR forward(std::span<const TokenId> tokens) const;

    // Read-only parameters, shared by all sessions.
    MatrixXfR tok_emb, pos_emb, head;
    std::vector<Block> blocks;
    VectorXf lnf_w, lnf_b;

private:
    TransformerConfig config_;
    std::uint64_t digest_ = 0;
};

} // namespace kpcc

#endif // KPCC_TRANSFORMER_HPP
