// SPDX-License-Identifier: Apache-2.0

#include "kpcc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "kpcc/byte_io.hpp"
#include "kpcc/cluster.hpp"
#include "kpcc/errors.hpp"
#include "kpcc/range_coder.hpp"

namespace kpcc {

namespace {

// Runs `f`, prefixing any codec error with the stage name while keeping its type.
template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const FormatError& e) {
        rethrow_tagged(stage, e);
    } catch (const DomainError& e) {
        rethrow_tagged(stage, e);
    } catch (const IntegrityError& e) {
        rethrow_tagged(stage, e);
    } catch (const ParameterError& e) {
        rethrow_tagged(stage, e);
    } catch (const EmptyInputError& e) {
        rethrow_tagged(stage, e);
    } catch (const MappingError& e) {
        rethrow_tagged(stage, e);
    } catch (const LoadError& e) {
        rethrow_tagged(stage, e);
    } catch (const TransportError& e) {
        rethrow_tagged(stage, e);
    } catch (const IoError& e) {
        rethrow_tagged(stage, e);
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct CodecSetup {
    Codebook codebook;
    std::shared_ptr<const ProbabilityModel> model;
};

CodecSetup setup_for_encode(const CodecConfig& cfg) {
    const int k = k_of(cfg.k_mode);
    ModelParams params = cfg.model_params;
    std::shared_ptr<const ProbabilityModel> model;
    if (params.vocab_size == 0 && cfg.model == ModelId::tiny_transformer) {
        model = make_model(cfg.model, params);
        params.vocab_size = model->vocab_size();
    }
    Codebook cb = cfg.codebook_path.empty() ? default_codebook(k, 3, params.vocab_size)
                                            : load_codebook(cfg.codebook_path, k, params.vocab_size);
    if (!model) {
        params.vocab_size = cb.vocab_size();
        model = make_model(cfg.model, params);
    }
    if (model->vocab_size() != cb.vocab_size()) {
        throw ParameterError("model vocabulary " + std::to_string(model->vocab_size()) +
                             " differs from codebook vocabulary " + std::to_string(cb.vocab_size()));
    }
    return {std::move(cb), std::move(model)};
}

CodecSetup setup_for_decode(const ContainerHeader& h, const DecodeConfig& cfg) {
    const int k = k_of(h.k_mode);
    Codebook cb = [&] {
        if (h.codebook.kind == Codebook::Kind::affine) {
            return default_codebook(k, h.codebook.base_id, h.codebook.vocab_size);
        }
        if (cfg.codebook_path.empty()) throw ParameterError("file was encoded with a codebook file; none given");
        return load_codebook(cfg.codebook_path, k, h.codebook.vocab_size);
    }();
    if (make_codebook_ref(cb) != h.codebook) {
        throw ParameterError("codebook does not match the one recorded in the file; refusing to decode");
    }
    ModelParams params = cfg.model_params;
    params.vocab_size = h.codebook.vocab_size;
    auto model = make_model(h.model_id, params);
    if (model->params_digest() != h.model_digest) {
        throw ParameterError("model parameters differ from the ones used to encode (digest mismatch); refusing to decode");
    }
    return {std::move(cb), std::move(model)};
}

void check_config(const CodecConfig& cfg) {
    if (cfg.num_clusters < 1) throw ParameterError("num_clusters must be at least 1");
    if (cfg.max_chunk_len < 1) throw ParameterError("max_chunk_len must be at least 1");
    if (cfg.threads < 1) throw ParameterError("threads must be at least 1");
}

std::vector<std::vector<TokenChunk>> tokenize_clusters(const ClusterSet& cs, const CodecConfig& cfg,
                                                       const Codebook& cb) {
    std::vector<std::vector<TokenChunk>> out(cs.clusters.size());
    run_jobs(cs.clusters.size(), cfg.threads, [&](std::size_t i) {
        const auto& c = cs.clusters[i];
        const auto seq = build_sequence(c.local_points, default_schedule(c.local_depth, cfg.k_mode));
        out[i] = tokenize_chunks(seq.symbols, cb, cfg.max_chunk_len);
    });
    return out;
}

} // namespace

int k_of(KMode mode) { return mode == KMode::mixed12 ? 12 : 8; }

void run_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
    if (n == 0) return;
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto extra = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1))) - 1;
    {
        std::vector<std::jthread> pool;
        pool.reserve(extra);
        for (std::size_t t = 0; t < extra; ++t) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& pc, const CodecConfig& cfg, EncodeReport* report) {
    const auto start = std::chrono::steady_clock::now();
    staged("config", [&] { check_config(cfg); });
    if (pc.empty()) throw EmptyInputError("load: point cloud has no points");
    const auto setup = staged("model", [&] { return setup_for_encode(cfg); });

    const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.num_clusters), pc.size()));
    const ClusterSet cs = staged("cluster", [&] { return cluster_points(pc, k, cfg.seed, cfg.threads); });
    const auto chunks = staged("tokenize", [&] { return tokenize_clusters(cs, cfg, setup.codebook); });

    // flatten to (cluster, chunk) jobs
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
        for (std::size_t j = 0; j < chunks[ci].size(); ++j) jobs.emplace_back(ci, j);
    }

    CompressedFile file;
    file.header.source_depth = static_cast<std::uint8_t>(pc.bit_depth());
    file.header.k_mode = cfg.k_mode;
    file.header.schedule_digest = schedule_family_digest(cfg.k_mode);
    file.header.model_id = setup.model->id();
    file.header.model_digest = setup.model->params_digest();
    file.header.codebook = make_codebook_ref(setup.codebook);
    file.header.max_chunk_len = cfg.max_chunk_len;
    file.header.point_count = pc.size();
    file.header.cluster_count = static_cast<std::uint32_t>(cs.clusters.size());
    file.clusters.resize(cs.clusters.size());
    for (std::size_t ci = 0; ci < cs.clusters.size(); ++ci) {
        const auto& c = cs.clusters[ci];
        file.clusters[ci].offset = {c.offset.x, c.offset.y, c.offset.z};
        file.clusters[ci].local_depth = static_cast<std::uint8_t>(c.local_depth);
        file.clusters[ci].chunks.resize(chunks[ci].size());
    }

    staged("entropy-code", [&] {
        run_jobs(jobs.size(), cfg.threads, [&](std::size_t j) {
            const auto [ci, idx] = jobs[j];
            const TokenChunk& chunk = chunks[ci][idx];
            auto session = setup.model->start_session();
            session->push_token(chunk.tokens.front()); // bos is implied, not coded
            ChunkRecord& rec = file.clusters[ci].chunks[idx];
            rec.chunk_index = static_cast<std::uint16_t>(chunk.chunk_index);
            rec.payload = encode_tokens(std::span(chunk.tokens).subspan(1), *session);
        });
    });

    auto bytes = staged("write", [&] { return write_container(file); });

    if (cfg.verify) {
        DecodeConfig dcfg;
        dcfg.model_params = cfg.model_params;
        dcfg.codebook_path = cfg.codebook_path;
        dcfg.threads = cfg.threads;
        const PointCloud back = decode_cloud(bytes, dcfg);
        if (back.points() != pc.points()) throw IntegrityError("verify: decoded cloud differs from the input");
    }

    if (report) {
        report->bytes = bytes.size();
        report->points = pc.size();
        report->bpp = 8.0 * static_cast<double>(bytes.size()) / static_cast<double>(pc.size());
        report->clusters = cs.clusters.size();
        report->chunks = jobs.size();
        report->wall_seconds = seconds_since(start);
    }
    return bytes;
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes, const DecodeConfig& cfg) {
    if (cfg.threads < 1) throw ParameterError("config: threads must be at least 1");
    const CompressedFile file = staged("read", [&] { return read_container(bytes); });
    const auto& h = file.header;
    const auto setup = staged("model", [&] { return setup_for_decode(h, cfg); });

    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    std::vector<std::vector<TokenChunk>> chunks(file.clusters.size());
    for (std::size_t ci = 0; ci < file.clusters.size(); ++ci) {
        chunks[ci].resize(file.clusters[ci].chunks.size());
        for (std::size_t j = 0; j < file.clusters[ci].chunks.size(); ++j) jobs.emplace_back(ci, j);
    }

    staged("entropy-decode", [&] {
        run_jobs(jobs.size(), cfg.threads, [&](std::size_t j) {
            const auto [ci, idx] = jobs[j];
            const ChunkRecord& rec = file.clusters[ci].chunks[idx];
            if (rec.payload.token_count == 0 || rec.payload.token_count > std::uint64_t{h.max_chunk_len} + 1) {
                throw IntegrityError("cluster " + std::to_string(ci) + " chunk " + std::to_string(rec.chunk_index) +
                                     ": token count " + std::to_string(rec.payload.token_count) + " out of range");
            }
            auto session = setup.model->start_session();
            session->push_token(setup.codebook.bos());
            TokenChunk& out = chunks[ci][idx];
            out.chunk_index = rec.chunk_index;
            out.tokens.reserve(rec.payload.token_count + 1);
            out.tokens.push_back(setup.codebook.bos());
            const auto decoded = decode_tokens(rec.payload, *session);
            out.tokens.insert(out.tokens.end(), decoded.begin(), decoded.end());
        });
    });

    ClusterSet cs;
    cs.source_depth = h.source_depth;
    cs.clusters.resize(file.clusters.size());
    staged("reconstruct", [&] {
        run_jobs(file.clusters.size(), cfg.threads, [&](std::size_t ci) {
            const auto& rec = file.clusters[ci];
            const auto symbols = detokenize_chunks(std::move(chunks[ci]), setup.codebook);
            auto& c = cs.clusters[ci];
            c.offset = {static_cast<std::uint32_t>(rec.offset[0]), static_cast<std::uint32_t>(rec.offset[1]),
                        static_cast<std::uint32_t>(rec.offset[2])};
            c.local_depth = rec.local_depth;
            c.local_points = reconstruct_points(symbols, default_schedule(rec.local_depth, h.k_mode));
        });
    });

    return staged("merge", [&] {
        PointCloud pc = merge_clusters(cs);
        if (pc.size() != h.point_count) {
            throw IntegrityError("decoded " + std::to_string(pc.size()) + " points, header declares " +
                                 std::to_string(h.point_count));
        }
        return pc;
    });
}

EncodeReport encode_file(const std::filesystem::path& input, const std::filesystem::path& output,
                         const CodecConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const PointCloud pc = staged("load", [&] { return load_ply(input); });
    EncodeReport report;
    const auto bytes = encode_cloud(pc, cfg, &report);
    staged("write", [&] { write_file_bytes(output, bytes); });
    report.wall_seconds = seconds_since(start);
    return report;
}

DecodeReport decode_file(const std::filesystem::path& input, const std::filesystem::path& output,
                         const DecodeConfig& cfg, const std::optional<std::filesystem::path>& verify_against) {
    const auto start = std::chrono::steady_clock::now();
    const auto bytes = staged("read", [&] { return read_file_bytes(input); });
    const PointCloud pc = decode_cloud(bytes, cfg);
    if (verify_against) {
        const PointCloud original = staged("verify", [&] { return load_ply(*verify_against); });
        if (original.points() != pc.points()) throw IntegrityError("verify: decoded cloud differs from " + verify_against->string());
    }
    staged("write", [&] { save_ply(pc, output); });
    return {pc.size(), seconds_since(start)};
}

// ---------------------------------------------------------------------------
// bench

double gain_percent(double bpp, double reference_bpp) {
    if (!(reference_bpp > 0.0)) throw DomainError("reference bpp must be positive");
    return (bpp - reference_bpp) / reference_bpp * 100.0;
}

BenchTable::BenchTable(std::vector<std::string> columns, std::vector<std::string> rows,
                       std::vector<std::vector<double>> bpp)
    : columns_(std::move(columns)), rows_(std::move(rows)), bpp_(std::move(bpp)) {
    if (columns_.empty()) throw ParameterError("bench needs at least one configuration");
    if (rows_.empty()) throw ParameterError("bench needs at least one input");
    if (bpp_.size() != rows_.size()) throw ParameterError("bench table row count mismatch");
    for (const auto& r : bpp_) {
        if (r.size() != columns_.size()) throw ParameterError("bench table column count mismatch");
    }
}

double BenchTable::gain(std::size_t row, std::size_t col) const { return gain_percent(bpp_[row][col], bpp_[row][0]); }

double BenchTable::average_bpp(std::size_t col) const {
    double sum = 0.0;
    for (const auto& r : bpp_) sum += r[col];
    return sum / static_cast<double>(bpp_.size());
}

double BenchTable::average_gain(std::size_t col) const {
    double sum = 0.0;
    for (std::size_t r = 0; r < bpp_.size(); ++r) sum += gain(r, col);
    return sum / static_cast<double>(bpp_.size());
}

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string BenchTable::to_csv() const {
    std::ostringstream os;
    os << "input";
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        os << ',' << csv_field(columns_[c] + " bpp");
        if (c > 0) os << ',' << csv_field(columns_[c] + " gain%");
    }
    os << '\n';
    auto line = [&](const std::string& label, auto bpp_at, auto gain_at) {
        os << csv_field(label);
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            os << ',' << fixed(bpp_at(c), 6);
            if (c > 0) os << ',' << fixed(gain_at(c), 6);
        }
        os << '\n';
    };
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        line(rows_[r], [&](std::size_t c) { return bpp(r, c); }, [&](std::size_t c) { return gain(r, c); });
    }
    line("Average", [&](std::size_t c) { return average_bpp(c); }, [&](std::size_t c) { return average_gain(c); });
    return os.str();
}

std::string BenchTable::to_text() const {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"input"};
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        head.push_back(columns_[c] + " bpp");
        if (c > 0) head.push_back("gain%");
    }
    cells.push_back(head);
    auto add = [&](const std::string& label, auto bpp_at, auto gain_at) {
        std::vector<std::string> row{label};
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            row.push_back(fixed(bpp_at(c), 3));
            if (c > 0) row.push_back(fixed(gain_at(c), 3));
        }
        cells.push_back(std::move(row));
    };
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        add(rows_[r], [&](std::size_t c) { return bpp(r, c); }, [&](std::size_t c) { return gain(r, c); });
    }
    add("Average", [&](std::size_t c) { return average_bpp(c); }, [&](std::size_t c) { return average_gain(c); });

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::ostringstream os;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i == 0) {
                os << std::left << std::setw(static_cast<int>(width[i])) << row[i];
            } else {
                os << "  " << std::right << std::setw(static_cast<int>(width[i])) << row[i];
            }
        }
        os << '\n';
    }
    return os.str();
}

BenchTable run_bench(const std::vector<std::filesystem::path>& inputs, const std::vector<BenchColumn>& columns) {
    if (columns.empty()) throw ParameterError("bench: no model configurations given");
    if (inputs.empty()) throw ParameterError("bench: no inputs given");
    std::vector<std::string> labels;
    for (const auto& c : columns) labels.push_back(c.label);
    std::vector<std::string> rows;
    std::vector<std::vector<double>> bpp;
    for (const auto& path : inputs) {
        const PointCloud pc = staged("load", [&] { return load_ply(path); });
        rows.push_back(path.stem().string());
        auto& row = bpp.emplace_back();
        for (const auto& c : columns) {
            EncodeReport report;
            encode_cloud(pc, c.cfg, &report);
            row.push_back(report.bpp);
        }
    }
    return BenchTable(std::move(labels), std::move(rows), std::move(bpp));
}

// ---------------------------------------------------------------------------
// corpus

std::vector<std::uint8_t> export_corpus(std::span<const PointCloud> clouds, const CodecConfig& cfg) {
    check_config(cfg);
    const int k = k_of(cfg.k_mode);
    Codebook cb = cfg.codebook_path.empty() ? default_codebook(k, 3, cfg.model_params.vocab_size)
                                            : load_codebook(cfg.codebook_path, k, cfg.model_params.vocab_size);
    ByteWriter w;
    w.u32(cb.vocab_size());
    w.u8(static_cast<std::uint8_t>(k));
    w.u32(cfg.max_chunk_len);
    for (const auto& pc : clouds) {
        if (pc.empty()) continue;
        const int nc = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.num_clusters), pc.size()));
        const ClusterSet cs = cluster_points(pc, nc, cfg.seed, cfg.threads);
        for (const auto& chunks : tokenize_clusters(cs, cfg, cb)) {
            for (const auto& ch : chunks) {
                w.u32(static_cast<std::uint32_t>(ch.tokens.size()));
                for (TokenId t : ch.tokens) w.u32(t);
            }
        }
    }
    return w.take();
}

Corpus parse_corpus(std::span<const std::uint8_t> bytes) {
    ByteReader<FormatError> r(bytes);
    Corpus c;
    c.vocab_size = r.u32();
    c.k = r.u8();
    c.max_chunk_len = r.u32();
    while (r.remaining() > 0) {
        const std::uint32_t n = r.u32();
        if (n < 2 || n > std::uint64_t{c.max_chunk_len} + 2) throw FormatError("corpus chunk length out of range");
        auto& chunk = c.chunks.emplace_back();
        chunk.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t t = r.u32();
            if (t >= c.vocab_size) throw FormatError("corpus token outside vocabulary");
            chunk.push_back(t);
        }
    }
    return c;
}

} // namespace kpcc
