// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_PIPELINE_HPP
#define KPCC_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpcc/container.hpp"
#include "kpcc/ktree.hpp"
#include "kpcc/point_cloud.hpp"
#include "kpcc/probmodel.hpp"
#include "kpcc/tokenmap.hpp"

namespace kpcc {

struct CodecConfig {
    int num_clusters = 12;          // clamped to the number of points
    KMode k_mode = KMode::octree8;
    std::uint32_t max_chunk_len = 512;
    ModelId model = ModelId::adaptive_ctx;
    ModelParams model_params;       // vocab_size 0: taken from the codebook / weights
    std::string codebook_path;      // empty: affine default codebook
    std::uint64_t seed = 7;
    int threads = 1;
    bool verify = false;            // decode in-process after encoding
};

struct DecodeConfig {
    ModelParams model_params;       // vocab_size is taken from the container
    std::string codebook_path;      // required when the file used a codebook file
    int threads = 1;
};

struct EncodeReport {
    double bpp = 0.0;
    std::size_t bytes = 0;
    std::size_t points = 0;
    std::size_t clusters = 0;
    std::size_t chunks = 0;
    double wall_seconds = 0.0;
};

struct DecodeReport {
    std::size_t points = 0;
    double wall_seconds = 0.0;
};

/// Runs `job(i)` for i in [0, n) on up to `threads` threads. Every job runs
/// even if another one fails; afterwards the exception of the lowest failing
/// index is rethrown, so the reported error does not depend on scheduling.
void run_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

/// Container bytes for `pc`. Errors carry the stage they came from as a
/// message prefix and keep their category.
std::vector<std::uint8_t> encode_cloud(const PointCloud& pc, const CodecConfig& cfg, EncodeReport* report = nullptr);

/// Inverse of encode_cloud. Refuses (ParameterError) when the model or
/// codebook built from `cfg` does not match the digests stored in the file.
PointCloud decode_cloud(std::span<const std::uint8_t> bytes, const DecodeConfig& cfg);

EncodeReport encode_file(const std::filesystem::path& input, const std::filesystem::path& output,
                         const CodecConfig& cfg);

/// When `verify_against` is set, the decoded cloud must equal that PLY's
/// point set or IntegrityError is thrown.
DecodeReport decode_file(const std::filesystem::path& input, const std::filesystem::path& output,
                         const DecodeConfig& cfg,
                         const std::optional<std::filesystem::path>& verify_against = std::nullopt);

/// Number of symbol bits per node for a k-mode (8 or 12).
int k_of(KMode mode);

// ---------------------------------------------------------------------------
// benchmark table

/// (bpp - ref) / ref * 100.
double gain_percent(double bpp, double reference_bpp);

/// Rows are inputs, columns are configurations; column 0 is the reference.
class BenchTable {
public:
    BenchTable(std::vector<std::string> columns, std::vector<std::string> rows,
               std::vector<std::vector<double>> bpp);

    std::size_t row_count() const { return rows_.size(); }
    std::size_t column_count() const { return columns_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::string>& rows() const { return rows_; }
    double bpp(std::size_t row, std::size_t col) const { return bpp_[row][col]; }

    /// Gain of column `col` over column 0 in row `row`.
    double gain(std::size_t row, std::size_t col) const;
    double average_bpp(std::size_t col) const;
    /// Mean of the per-row gains (not the gain of the mean bpp).
    double average_gain(std::size_t col) const;

    /// One line per row plus an "Average" line; bpp and gain columns per config.
    std::string to_csv() const;
    std::string to_text() const;

private:
    std::vector<std::string> columns_;
    std::vector<std::string> rows_;
    std::vector<std::vector<double>> bpp_;
};

struct BenchColumn {
    std::string label;
    CodecConfig cfg;
};

/// Encodes every input with every configuration (in memory) and tabulates
/// bits per point. Throws ParameterError for an empty input or config list.
BenchTable run_bench(const std::vector<std::filesystem::path>& inputs, const std::vector<BenchColumn>& columns);

// ---------------------------------------------------------------------------
// training corpus

/// Token chunks for the trainer. Layout (little endian):
///   vocab u32, K u8, max_chunk_len u32, then per chunk
///   token_count u32 followed by token_count u32 tokens (bos and eos included).
std::vector<std::uint8_t> export_corpus(std::span<const PointCloud> clouds, const CodecConfig& cfg);

struct Corpus {
    std::uint32_t vocab_size = 0;
    int k = 0;
    std::uint32_t max_chunk_len = 0;
    std::vector<std::vector<TokenId>> chunks;
};

Corpus parse_corpus(std::span<const std::uint8_t> bytes); // throws FormatError

} // namespace kpcc

#endif // KPCC_PIPELINE_HPP
