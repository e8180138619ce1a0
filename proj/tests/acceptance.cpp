// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any selected criterion fails. `--only <name>` runs a single criterion.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "kpcc/bridge.hpp"
#include "kpcc/byte_io.hpp"
#include "kpcc/errors.hpp"
#include "kpcc/ktree.hpp"
#include "kpcc/pipeline.hpp"
#include "kpcc/probmodel.hpp"
#include "kpcc/range_coder.hpp"
#include "kpcc/synthgen.hpp"

using namespace kpcc;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<std::array<int, 3>> splits_of(const SplitSchedule& s) {
    std::vector<std::array<int, 3>> out;
    for (const auto& l : s.levels) out.push_back({l.sx, l.sy, l.sz});
    return out;
}

std::vector<Point3> random_cluster(std::mt19937_64& rng, std::size_t n, std::uint32_t extent) {
    n = std::min<std::size_t>(n, std::size_t{extent} * extent * extent);
    std::set<Point3> s;
    while (s.size() < n) {
        s.insert({static_cast<std::uint32_t>(rng() % extent), static_cast<std::uint32_t>(rng() % extent),
                  static_cast<std::uint32_t>(rng() % extent)});
    }
    return {s.begin(), s.end()};
}

// Independent breadth-first decoder: walks the levels and expands each
// symbol into its child cells. Returns nullopt whenever the sequence breaks
// the cascade (zero or oversized symbol, short or long input).
std::optional<std::vector<Point3>> oracle_decode(const std::vector<std::uint16_t>& seq, const std::vector<std::array<int, 3>>& splits) {
    std::array<std::uint64_t, 3> size{1, 1, 1};
    for (const auto& s : splits)
        for (int a = 0; a < 3; ++a) size[static_cast<std::size_t>(a)] *= static_cast<std::uint64_t>(s[static_cast<std::size_t>(a)]);
    std::vector<std::array<std::uint64_t, 3>> nodes{{0, 0, 0}};
    std::size_t pos = 0;
    for (const auto& s : splits) {
        const std::uint32_t k = static_cast<std::uint32_t>(s[0] * s[1] * s[2]);
        for (int a = 0; a < 3; ++a) size[static_cast<std::size_t>(a)] /= static_cast<std::uint64_t>(s[static_cast<std::size_t>(a)]);
        std::vector<std::array<std::uint64_t, 3>> next;
        for (const auto& n : nodes) {
            if (pos >= seq.size()) return std::nullopt;
            const std::uint32_t sym = seq[pos++];
            if (sym == 0 || sym >= (1u << k)) return std::nullopt;
            for (std::uint32_t c = 0; c < k; ++c) {
                if (!(sym >> c & 1u)) continue;
                const std::uint64_t ix = c / static_cast<std::uint32_t>(s[1] * s[2]);
                const std::uint64_t iy = c / static_cast<std::uint32_t>(s[2]) % static_cast<std::uint32_t>(s[1]);
                const std::uint64_t iz = c % static_cast<std::uint32_t>(s[2]);
                next.push_back({n[0] + ix * size[0], n[1] + iy * size[1], n[2] + iz * size[2]});
            }
        }
        nodes = std::move(next);
    }
    if (pos != seq.size()) return std::nullopt;
    std::vector<Point3> pts;
    for (const auto& n : nodes) pts.push_back({static_cast<std::uint32_t>(n[0]), static_cast<std::uint32_t>(n[1]), static_cast<std::uint32_t>(n[2])});
    std::sort(pts.begin(), pts.end());
    return pts;
}

ShapeParams bounded_params(Shape shape, int depth, std::uint64_t seed) {
    ShapeParams p;
    const double n = std::ldexp(1.0, depth);
    if (shape == Shape::sphere) p.radius = std::min(0.3 * n, 48.0) * (0.8 + 0.05 * static_cast<double>(seed % 8));
    if (shape == Shape::noise) p.count = 3000;
    if (shape == Shape::plane) {
        p.tilt_x = 0.1 * static_cast<double>(seed % 4);
        p.tilt_y = 0.05 * static_cast<double>(seed % 3);
    }
    return p;
}

// plane and box unions grow as n^2; keep them to depths where that is cheap
Shape bounded_shape(std::size_t i, int depth) {
    static const Shape all[] = {Shape::sphere, Shape::plane, Shape::box_union, Shape::noise, Shape::box};
    Shape s = all[i % 5];
    if (depth > 8 && (s == Shape::plane || s == Shape::box_union)) s = Shape::sphere;
    if (depth > 4 && s == Shape::box) s = Shape::noise;
    return s;
}

Outcome lossless() {
    const int depths[] = {4, 6, 8, 10};
    const int clusters[] = {1, 2, 12};
    const KMode modes[] = {KMode::octree8, KMode::mixed12};
    const ModelId models[] = {ModelId::uniform, ModelId::adaptive_ctx};
    std::set<std::tuple<int, int, int, int>> covered;
    std::size_t points = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const int d = depths[i % 4];
        CodecConfig cfg;
        cfg.num_clusters = clusters[i / 4 % 3];
        cfg.k_mode = modes[i / 12 % 2];
        cfg.model = models[i / 24 % 2];
        covered.insert({d, cfg.num_clusters, static_cast<int>(cfg.k_mode), static_cast<int>(cfg.model)});
        const Shape shape = bounded_shape(i, d);
        const auto pc = gen(shape, bounded_params(shape, d, i), d, i);
        points += pc.size();
        const auto back = decode_cloud(encode_cloud(pc, cfg), {});
        if (back != pc) {
            return {false, "cloud " + std::to_string(i) + " (" + std::string(to_string(shape)) + ", d=" + std::to_string(d) +
                               ") did not round trip"};
        }
    }
    return {covered.size() == 48, "100 clouds, " + std::to_string(points) + " points, " + std::to_string(covered.size()) +
                                      "/48 configurations covered, all set-equal"};
}

class StaticSession final : public ModelSession {
public:
    explicit StaticSession(QuantizedCdf cdf) : cdf_(std::move(cdf)) {}
    std::uint32_t vocab_size() const override { return static_cast<std::uint32_t>(cdf_.cumfreq().size() - 1); }
    QuantizedCdf next_cdf() override { return cdf_; }
    void push_token(TokenId) override {}
    void reset() override {}

private:
    QuantizedCdf cdf_;
};

Outcome entropy_bound() {
    // 255 symbols with mildly uneven weights; H from the exact distribution
    std::vector<double> w(255);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 8.0 + static_cast<double>(i % 4);
    double sum = 0.0;
    for (double x : w) sum += x;
    double h = 0.0;
    for (double x : w) h -= x / sum * std::log2(x / sum);
    std::mt19937_64 rng(2);
    std::discrete_distribution<int> draw(w.begin(), w.end());
    const int n = 100000;
    std::vector<TokenId> tokens(n);
    for (auto& t : tokens) t = static_cast<TokenId>(draw(rng));
    StaticSession enc(quantize_weights(w));
    const auto payload = encode_tokens(tokens, enc);
    StaticSession dec(quantize_weights(w));
    const bool same = decode_tokens(payload, dec) == tokens;
    const double bits = 8.0 * static_cast<double>(payload.bytes.size());
    const double lo = h * n, hi = 1.01 * h * n + 64;
    std::ostringstream os;
    os.precision(10);
    os << "H=" << h << " bits, payload " << bits << " bits, window [" << lo << ", " << hi << "], round trip "
       << (same ? "exact" : "MISMATCH");
    return {same && bits >= lo && bits <= hi, os.str()};
}

Outcome ktree_oracle() {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % (trial % 10 == 0 ? 4096 : 64);
        const auto pts = random_cluster(rng, n, 16);
        const auto sched = default_schedule(4, trial % 2 ? KMode::mixed12 : KMode::octree8);
        const auto seq = build_sequence(pts, sched);
        if (seq.symbols != oracle_sequence(pts, splits_of(sched))) return {false, "sequence differs on cluster " + std::to_string(trial)};
        if (reconstruct_points(seq) != pts) return {false, "reconstruction differs on cluster " + std::to_string(trial)};
    }
    return {true, "1000 clusters in 16^3 grids (octree8 and mixed12) match the recursive oracle and invert exactly"};
}

Outcome decodability() {
    std::mt19937_64 rng(31);
    // valid sequences: the per-level popcount cascade holds
    for (int i = 0; i < 10000; ++i) {
        const int depth = 1 + static_cast<int>(rng() % 6);
        const auto sched = default_schedule(depth, i % 2 ? KMode::mixed12 : KMode::octree8);
        const auto pts = random_cluster(rng, 1 + rng() % 60, 1u << depth);
        const auto seq = build_sequence(pts, sched).symbols;
        std::size_t pos = 0, count = 1;
        for (std::size_t l = 0; l < sched.levels.size(); ++l) {
            std::size_t next = 0;
            for (std::size_t j = 0; j < count; ++j) next += static_cast<std::size_t>(std::popcount(seq[pos + j]));
            pos += count;
            count = next;
        }
        if (pos != seq.size() || count != pts.size()) return {false, "cascade broken on valid sequence " + std::to_string(i)};
    }
    // mutations: rejected unless they happen to form another valid tree, in
    // which case the output must be exactly that tree
    std::size_t rejected = 0, still_valid = 0, attempts = 0;
    while (rejected < 10000) {
        ++attempts;
        const int depth = 1 + static_cast<int>(rng() % 5);
        const auto sched = default_schedule(depth, attempts % 2 ? KMode::mixed12 : KMode::octree8);
        const std::uint32_t kmax = (1u << sched.levels[0].k()) - 1;
        auto seq = build_sequence(random_cluster(rng, 1 + rng() % 40, 1u << depth), sched).symbols;
        const std::size_t at = rng() % seq.size();
        switch (rng() % 6) {
            case 0: seq[at] = static_cast<std::uint16_t>(rng() % (kmax + 1)); break;
            case 1: seq[at] ^= static_cast<std::uint16_t>(1u << (rng() % sched.levels[0].k())); break;
            case 2: seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(at)); break;
            case 3: seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(at), static_cast<std::uint16_t>(1 + rng() % kmax)); break;
            case 4: seq.resize(at); break;
            default: seq.push_back(static_cast<std::uint16_t>(rng() % (kmax + 2))); break;
        }
        const auto expect = oracle_decode(seq, splits_of(sched));
        std::optional<std::vector<Point3>> got;
        try {
            got = reconstruct_points(seq, sched);
        } catch (const IntegrityError&) {
        }
        if (expect) {
            ++still_valid;
            if (!got || *got != *expect) return {false, "a valid mutated sequence decoded wrongly"};
        } else {
            if (got) return {false, "an invalid sequence decoded to " + std::to_string(got->size()) + " points"};
            ++rejected;
        }
    }
    return {true, "10000 valid sequences hold the cascade; " + std::to_string(rejected) +
                      " invalid mutations rejected with integrity errors; " + std::to_string(still_valid) +
                      " mutations that formed another valid tree decoded to exactly that tree"};
}

Outcome context_benefit() {
    CodecConfig adaptive;
    adaptive.num_clusters = 1;
    adaptive.max_chunk_len = 65535;
    CodecConfig uniform = adaptive;
    uniform.model = ModelId::uniform;
    std::size_t inputs = 0, strong = 0, ordered = 0;
    double worst = 0.0;
    for (auto shape : {Shape::plane, Shape::sphere, Shape::box_union}) {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            ShapeParams p;
            if (shape == Shape::plane) p.tilt_x = 0.15 * static_cast<double>(seed % 4);
            const auto pc = gen(shape, p, 8, seed);
            EncodeReport ra, ru;
            encode_cloud(pc, adaptive, &ra);
            encode_cloud(pc, uniform, &ru);
            const double ratio = ra.bpp / ru.bpp;
            worst = std::max(worst, ratio);
            ++inputs;
            if (ratio <= 0.9) ++strong;
            if (ra.bpp <= ru.bpp) ++ordered;
        }
    }
    std::ostringstream os;
    os << strong << "/" << inputs << " inputs at <= 0.9x uniform bpp, " << ordered << "/" << inputs
       << " at <= 1x; worst ratio " << worst << " (one cluster per cloud)";
    return {strong * 10 >= inputs * 9 && ordered == inputs, os.str()};
}

Outcome determinism() {
    for (std::uint64_t i = 0; i < 20; ++i) {
        const int d = 5 + static_cast<int>(i % 4);
        const Shape shape = bounded_shape(i, d);
        const auto pc = gen(shape, bounded_params(shape, d, i), d, 100 + i);
        CodecConfig cfg;
        cfg.max_chunk_len = 64;
        cfg.model = i % 3 ? ModelId::adaptive_ctx : ModelId::uniform;
        cfg.threads = 1;
        const auto one = encode_cloud(pc, cfg);
        cfg.threads = 8;
        if (encode_cloud(pc, cfg) != one) return {false, "input " + std::to_string(i) + " differs between 1 and 8 threads"};
    }
    return {true, "20 inputs byte-identical with 1 and 8 threads"};
}

Outcome bridge() {
    const std::string mock = std::string("'") + KPCC_MOCK_BRIDGE + "'";
    // chunks of 10^3 tokens straight through the range coder
    BridgeModel model(mock, 4098, 10000);
    std::mt19937_64 rng(1);
    for (int c = 0; c < 3; ++c) {
        std::vector<TokenId> tokens(1000);
        for (auto& t : tokens) t = static_cast<TokenId>(rng() % 4098);
        auto enc = model.start_session();
        const auto payload = encode_tokens(tokens, *enc);
        auto dec = model.start_session();
        if (decode_tokens(payload, *dec) != tokens) return {false, "1000-token chunk did not round trip"};
    }
    // and through the whole codec with 10^3-symbol chunks
    const auto pc = gen(Shape::sphere, {}, 7, 1);
    CodecConfig cfg;
    cfg.model = ModelId::external_bridge;
    cfg.model_params.bridge_command = mock;
    cfg.max_chunk_len = 1000;
    cfg.num_clusters = 2;
    DecodeConfig dcfg;
    dcfg.model_params = cfg.model_params;
    if (decode_cloud(encode_cloud(pc, cfg), dcfg) != pc) return {false, "codec round trip through the mock failed"};

    // the mock exits part-way: transport error, nothing written
    const auto dir = std::filesystem::temp_directory_path() / ("kpcc-accept-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    save_ply(pc, dir / "in.ply");
    cfg.model_params.bridge_command = mock + " --die-after 300";
    bool transport = false;
    try {
        encode_file(dir / "in.ply", dir / "out.kpc", cfg);
    } catch (const TransportError&) {
        transport = true;
    }
    const bool written = std::filesystem::exists(dir / "out.kpc");
    std::filesystem::remove_all(dir);
    if (!transport) return {false, "killing the mock did not raise a transport error"};
    if (written) return {false, "a container was written despite the failure"};
    return {true, "1000-token chunks round trip; mock killed mid-encode gives a transport error and no file"};
}

Outcome gain_arithmetic() {
    struct Row {
        const char* name;
        double gpcc, ours, printed;
    };
    // Published bpp values and printed gains over G-PCC.
    const Row rows[] = {
        {"Longdress_vox10_1300", 1.015, 0.631, -37.882},
        {"Redandblack_vox10_1550", 1.100, 0.703, -36.100},
        {"Soldier_vox10_0690", 1.013, 0.634, -38.456},
        {"Loot_vox10_1200", 0.970, 0.597, -38.454},
        {"Basketball_player_vox11_0200", 0.898, 0.490, -45.479},
        {"Dancer_vox11_0001", 0.880, 0.485, -44.909},
    };
    const double printed_average = -40.213;
    std::vector<std::string> names;
    std::vector<std::vector<double>> bpp;
    for (const auto& r : rows) {
        names.push_back(r.name);
        bpp.push_back({r.gpcc, r.ours});
    }
    const BenchTable table({"G-PCC", "ours"}, names, bpp);
    bool ok = true;
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    std::vector<std::string> off;
    for (std::size_t i = 0; i < std::size(rows); ++i) {
        const double g = table.gain(i, 1);
        if (std::abs(g - rows[i].printed) > 0.1) {
            ok = false;
            std::ostringstream o;
            o.setf(std::ios::fixed);
            o.precision(3);
            o << rows[i].name << " " << g << "% vs printed " << rows[i].printed << "%";
            off.push_back(o.str());
        }
    }
    const double avg = table.average_gain(1);
    if (std::abs(avg - printed_average) > 0.1) ok = false;
    os << "average of per-row gains " << avg << "% vs printed " << printed_average << "%";
    if (!off.empty()) {
        os << "; rows off by > 0.1 pp:";
        for (const auto& s : off) os << " " << s;
    }
    return {ok, os.str()};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
    static const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
        {"lossless", lossless},           {"entropy_bound", entropy_bound}, {"ktree_oracle", ktree_oracle},
        {"decodability", decodability},   {"context_benefit", context_benefit}, {"determinism", determinism},
        {"bridge", bridge},               {"gain_arithmetic", gain_arithmetic},
    };
    return all;
}

} // namespace

int main(int argc, char** argv) {
    std::string only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            only = argv[++i];
        } else {
            std::cerr << "usage: acceptance [--only <criterion>]\n";
            return 2;
        }
    }
    bool any = false, all_pass = true;
    for (const auto& [name, fn] : criteria()) {
        if (!only.empty() && name != only) continue;
        any = true;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("unexpected error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }
    if (!any) {
        std::cerr << "unknown criterion '" << only << "'\n";
        return 2;
    }
    return all_pass ? 0 : 1;
}
