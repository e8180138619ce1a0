// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kpcc/byte_io.hpp"
#include "kpcc/container.hpp"
#include "kpcc/errors.hpp"
#include "kpcc/pipeline.hpp"
#include "kpcc/synthgen.hpp"

namespace {

using namespace kpcc;

struct ModelOptions {
    int order = 2;
    std::string weights;
    std::string bridge_cmd;
    int bridge_timeout_ms = 30000;
    std::string codebook;

    void attach(CLI::App* app) {
        app->add_option("--order", order, "adaptive model context order (0-3)")->capture_default_str();
        app->add_option("--weights", weights, "KPTW weights file for the transformer model");
        app->add_option("--bridge-cmd", bridge_cmd, "external model command (default: $KPCC_BRIDGE_CMD)");
        app->add_option("--bridge-timeout", bridge_timeout_ms, "bridge reply timeout in ms")->capture_default_str();
        app->add_option("--codebook", codebook, "codebook file (default: affine mapping)");
    }
    ModelParams params() const {
        ModelParams p;
        p.context_order = order;
        p.weights_path = weights;
        p.bridge_command = bridge_cmd;
        p.bridge_timeout_ms = bridge_timeout_ms;
        return p;
    }
};

struct EncodeOptions {
    int clusters = 12;
    std::string k_mode = "octree8";
    std::string model = "adaptive";
    std::uint32_t chunk = 512;
    std::uint64_t seed = 7;
    int threads = 1;

    void attach(CLI::App* app, bool with_model) {
        app->add_option("--clusters", clusters, "number of k-means clusters")->capture_default_str();
        app->add_option("--k-mode", k_mode, "octree8 or mixed12")->capture_default_str();
        if (with_model) app->add_option("--model", model, "uniform, adaptive, transformer or bridge")->capture_default_str();
        app->add_option("--chunk", chunk, "maximum symbols per chunk")->capture_default_str();
        app->add_option("--seed", seed, "clustering seed")->capture_default_str();
        app->add_option("--threads", threads, "worker threads")->capture_default_str();
    }
    CodecConfig config(const ModelOptions& m) const {
        CodecConfig c;
        c.num_clusters = clusters;
        c.k_mode = parse_k_mode(k_mode);
        c.model = parse_model_id(model);
        c.max_chunk_len = chunk;
        c.model_params = m.params();
        c.codebook_path = m.codebook;
        c.seed = seed;
        c.threads = threads;
        return c;
    }
};

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void print_info(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const CompressedFile file = read_container(bytes);
    const auto& h = file.header;
    std::size_t chunks = 0;
    std::uint64_t tokens = 0;
    for (const auto& c : file.clusters) {
        chunks += c.chunks.size();
        for (const auto& ch : c.chunks) tokens += ch.payload.token_count;
    }
    std::cout << "file            " << path << '\n'
              << "bytes           " << bytes.size() << '\n'
              << "version         " << int{kContainerVersion} << '\n'
              << "source_depth    " << int{h.source_depth} << '\n'
              << "k_mode          " << to_string(h.k_mode) << '\n'
              << "schedule_digest " << hex64(h.schedule_digest) << '\n'
              << "model           " << to_string(h.model_id) << '\n'
              << "model_digest    " << hex64(h.model_digest) << '\n'
              << "codebook        " << (h.codebook.kind == Codebook::Kind::affine ? "affine" : "file")
              << " base=" << h.codebook.base_id << " vocab=" << h.codebook.vocab_size
              << " digest=" << hex64(h.codebook.digest) << '\n'
              << "max_chunk_len   " << h.max_chunk_len << '\n'
              << "points          " << h.point_count << '\n'
              << "clusters        " << h.cluster_count << '\n'
              << "chunks          " << chunks << '\n'
              << "coded tokens    " << tokens << '\n'
              << "bpp             " << bits_per_point(bytes) << '\n';
    for (std::size_t i = 0; i < file.clusters.size(); ++i) {
        const auto& c = file.clusters[i];
        std::size_t payload = 0;
        for (const auto& ch : c.chunks) payload += ch.payload.bytes.size();
        std::cout << "  cluster " << i << ": offset (" << c.offset[0] << ", " << c.offset[1] << ", " << c.offset[2]
                  << ") depth " << int{c.local_depth} << ", " << c.chunks.size() << " chunks, " << payload
                  << " payload bytes\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kpcc - lossless voxel point cloud geometry codec"};
    app.require_subcommand(1);

    // encode
    auto* enc = app.add_subcommand("encode", "compress a PLY file");
    std::string enc_in, enc_out;
    bool enc_verify = false;
    EncodeOptions enc_opts;
    ModelOptions enc_model;
    enc->add_option("-i,--input", enc_in, "input PLY")->required();
    enc->add_option("-o,--output", enc_out, "output container")->required();
    enc->add_flag("--verify", enc_verify, "decode in-process and compare");
    enc_opts.attach(enc, true);
    enc_model.attach(enc);

    // decode
    auto* dec = app.add_subcommand("decode", "decompress to a PLY file");
    std::string dec_in, dec_out, dec_verify;
    int dec_threads = 1;
    ModelOptions dec_model;
    dec->add_option("-i,--input", dec_in, "input container")->required();
    dec->add_option("-o,--output", dec_out, "output PLY")->required();
    dec->add_option("--verify", dec_verify, "original PLY to compare against");
    dec->add_option("--threads", dec_threads, "worker threads")->capture_default_str();
    dec_model.attach(dec);

    // bench
    auto* bench = app.add_subcommand("bench", "compare models on a set of inputs");
    std::vector<std::string> bench_inputs, bench_models;
    std::string bench_csv;
    EncodeOptions bench_opts;
    ModelOptions bench_model;
    bench->add_option("--inputs", bench_inputs, "input PLY files")->required();
    bench->add_option("--models", bench_models, "models; the first is the reference column")->required();
    bench->add_option("--csv", bench_csv, "write the table as CSV here");
    bench_opts.attach(bench, false);
    bench_model.attach(bench);

    // info
    auto* info = app.add_subcommand("info", "print a container header");
    std::string info_in;
    info->add_option("file", info_in, "container")->required();

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "write a synthetic voxel cloud");
    std::string gen_shape = "sphere", gen_out;
    int gen_depth = 8;
    std::uint64_t gen_seed = 1;
    ShapeParams gen_params;
    double gen_radius = -1.0;
    int gen_level = -1;
    gen_cmd->add_option("--shape", gen_shape, "plane, sphere, box, box_union, noise")->capture_default_str();
    gen_cmd->add_option("--depth", gen_depth, "bit depth")->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed, "random seed")->capture_default_str();
    gen_cmd->add_option("--radius", gen_radius, "sphere radius in voxels");
    gen_cmd->add_option("--level", gen_level, "plane height");
    gen_cmd->add_option("--tilt-x", gen_params.tilt_x, "plane slope along x");
    gen_cmd->add_option("--tilt-y", gen_params.tilt_y, "plane slope along y");
    gen_cmd->add_option("--boxes", gen_params.boxes, "boxes in a box union")->capture_default_str();
    gen_cmd->add_option("--count", gen_params.count, "noise samples")->capture_default_str();
    gen_cmd->add_option("-o,--output", gen_out, "output PLY")->required();

    // export-corpus
    auto* corpus = app.add_subcommand("export-corpus", "write token chunks for model training");
    std::vector<std::string> corpus_inputs;
    std::string corpus_out;
    std::uint32_t corpus_vocab = 0;
    EncodeOptions corpus_opts;
    std::string corpus_codebook;
    corpus->add_option("--inputs", corpus_inputs, "input PLY files")->required();
    corpus->add_option("-o,--output", corpus_out, "corpus file")->required();
    corpus->add_option("--vocab", corpus_vocab, "vocabulary size (default: smallest that fits)");
    corpus->add_option("--codebook", corpus_codebook, "codebook file");
    corpus_opts.attach(corpus, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enc) {
            CodecConfig cfg = enc_opts.config(enc_model);
            cfg.verify = enc_verify;
            const auto r = encode_file(enc_in, enc_out, cfg);
            std::cout << "points " << r.points << ", clusters " << r.clusters << ", chunks " << r.chunks << ", bytes "
                      << r.bytes << ", bpp " << r.bpp << ", " << r.wall_seconds << " s" << (enc_verify ? ", verified" : "")
                      << '\n';
        } else if (*dec) {
            DecodeConfig cfg;
            cfg.model_params = dec_model.params();
            cfg.codebook_path = dec_model.codebook;
            cfg.threads = dec_threads;
            std::optional<std::filesystem::path> verify;
            if (!dec_verify.empty()) verify = dec_verify;
            const auto r = decode_file(dec_in, dec_out, cfg, verify);
            std::cout << "points " << r.points << ", " << r.wall_seconds << " s" << (verify ? ", verified" : "") << '\n';
        } else if (*bench) {
            std::vector<BenchColumn> columns;
            for (const auto& m : bench_models) {
                EncodeOptions o = bench_opts;
                o.model = m;
                columns.push_back({m, o.config(bench_model)});
            }
            std::vector<std::filesystem::path> inputs(bench_inputs.begin(), bench_inputs.end());
            const BenchTable table = run_bench(inputs, columns);
            std::cout << table.to_text();
            if (!bench_csv.empty()) {
                std::ofstream out(bench_csv);
                out << table.to_csv();
                if (!out) throw IoError("cannot write " + bench_csv);
            }
        } else if (*info) {
            print_info(info_in);
        } else if (*gen_cmd) {
            if (gen_radius >= 0.0) gen_params.radius = gen_radius;
            if (gen_level >= 0) gen_params.level = gen_level;
            const PointCloud pc = gen(parse_shape(gen_shape), gen_params, gen_depth, gen_seed);
            save_ply(pc, gen_out);
            std::cout << "wrote " << pc.size() << " points at depth " << pc.bit_depth() << '\n';
        } else if (*corpus) {
            EncodeOptions o = corpus_opts;
            ModelOptions m;
            m.codebook = corpus_codebook;
            CodecConfig cfg = o.config(m);
            cfg.model_params.vocab_size = corpus_vocab;
            std::vector<PointCloud> clouds;
            for (const auto& p : corpus_inputs) clouds.push_back(load_ply(p));
            const auto bytes = export_corpus(clouds, cfg);
            write_file_bytes(corpus_out, bytes);
            std::cout << "wrote " << bytes.size() << " bytes\n";
        }
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << '\n';
        return 2;
    } catch (const kpcc::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
