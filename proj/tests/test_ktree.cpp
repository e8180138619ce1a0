// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <bit>
#include <random>

#include "kpcc/errors.hpp"
#include "kpcc/ktree.hpp"
#include "kpcc/synthgen.hpp"
#include "test_util.hpp"

using namespace kpcc;

namespace {

SplitSchedule octree(int levels) { return default_schedule(levels, KMode::octree8); }

std::vector<std::array<int, 3>> splits_of(const SplitSchedule& s) {
    std::vector<std::array<int, 3>> out;
    for (const auto& l : s.levels) out.push_back({l.sx, l.sy, l.sz});
    return out;
}

std::vector<Point3> sorted_unique(std::vector<Point3> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

} // namespace

TEST_CASE("single point and full cell") {
    const std::vector<Point3> origin{{0, 0, 0}};
    CHECK(build_sequence(origin, octree(1)).symbols == std::vector<std::uint16_t>{1});
    CHECK(reconstruct_points(std::vector<std::uint16_t>{1}, octree(1)) == origin);

    std::vector<Point3> corners;
    for (std::uint32_t x = 0; x < 2; ++x)
        for (std::uint32_t y = 0; y < 2; ++y)
            for (std::uint32_t z = 0; z < 2; ++z) corners.push_back({x, y, z});
    CHECK(build_sequence(corners, octree(1)).symbols == std::vector<std::uint16_t>{255});
    CHECK(reconstruct_points(std::vector<std::uint16_t>{255}, octree(1)) == corners);
}

TEST_CASE("child index is x-major") {
    const Split s{2, 2, 3};
    CHECK(child_index(s, 0, 0, 1) == 1);
    CHECK(child_index(s, 0, 1, 0) == 3);
    CHECK(child_index(s, 1, 0, 0) == 6);
    CHECK(child_index(s, 1, 1, 2) == 11);
    // a lone point at x = 1 in a 2x2x2 grid lands in bit 4
    CHECK(build_sequence(std::vector<Point3>{{1, 0, 0}}, octree(1)).symbols == std::vector<std::uint16_t>{16});
    CHECK(build_sequence(std::vector<Point3>{{0, 0, 1}}, octree(1)).symbols == std::vector<std::uint16_t>{2});
}

TEST_CASE("hand-built two-level sequence") {
    // points (0,0,0) and (3,3,3) in a 4^3 grid: root has children 0 and 7,
    // then each child holds one voxel in its own slot 0 / slot 7
    const std::vector<Point3> pts{{0, 0, 0}, {3, 3, 3}};
    const auto seq = build_sequence(pts, octree(2));
    CHECK(seq.symbols == std::vector<std::uint16_t>{0x81, 0x01, 0x80});
    CHECK(seq.level_counts() == std::vector<std::size_t>{1, 2});
    CHECK(reconstruct_points(seq) == pts);
}

TEST_CASE("default schedules") {
    const auto o = default_schedule(10, KMode::octree8);
    CHECK(o.levels.size() == 10);
    for (const auto& l : o.levels) CHECK(l.k() == 8);
    const auto m = default_schedule(10, KMode::mixed12);
    CHECK(m.levels.size() == 10);
    for (const auto& l : m.levels) CHECK(l.k() == 12);
    CHECK(m.extent(2) == 59049);
    CHECK(m.extent(0) == 1024);
    const auto d3 = default_schedule(3, KMode::octree8);
    CHECK(d3.extent(0) == 8);
    CHECK(d3.extent(1) == 8);
    CHECK(d3.extent(2) == 8);
    CHECK(d3.max_k() == 8);
    CHECK_THROWS_AS(default_schedule(0, KMode::octree8), ParameterError);
    CHECK_THROWS_AS(default_schedule(17, KMode::octree8), ParameterError);
    CHECK(parse_k_mode("mixed12") == KMode::mixed12);
    CHECK_THROWS_AS(parse_k_mode("k9"), ParameterError);
}

TEST_CASE("schedule validation and domain checks") {
    SplitSchedule bad{{Split{1, 1, 1}}};
    CHECK_THROWS_AS(build_sequence(std::vector<Point3>{{0, 0, 0}}, bad), ParameterError);
    SplitSchedule big{{Split{4, 2, 3}}};
    CHECK_THROWS_AS(build_sequence(std::vector<Point3>{{0, 0, 0}}, big), ParameterError);
    CHECK_THROWS_AS(build_sequence(std::vector<Point3>{{8, 0, 0}}, octree(3)), DomainError);
    CHECK_THROWS_AS(build_sequence(std::vector<Point3>{}, octree(3)), EmptyInputError);
    SplitSchedule k16{{Split{2, 2, 4}}};
    CHECK(build_sequence(std::vector<Point3>{{1, 1, 3}}, k16).symbols == std::vector<std::uint16_t>{0x8000});
}

TEST_CASE("reconstruct rejects broken cascades and names the level") {
    const auto s = octree(2);
    CHECK_THROWS_AS(reconstruct_points(std::vector<std::uint16_t>{}, s), IntegrityError);
    CHECK_THROWS_AS(reconstruct_points(std::vector<std::uint16_t>{3, 1}, s), IntegrityError);        // truncated
    CHECK_THROWS_AS(reconstruct_points(std::vector<std::uint16_t>{1, 1, 1}, s), IntegrityError);     // trailing
    CHECK_THROWS_AS(reconstruct_points(std::vector<std::uint16_t>{1, 0}, s), IntegrityError);        // zero
    CHECK_THROWS_AS(reconstruct_points(std::vector<std::uint16_t>{1, 256}, s), IntegrityError);      // > 2^K-1
    try {
        reconstruct_points(std::vector<std::uint16_t>{3, 1}, s);
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("level 1") != std::string::npos);
    }
}

TEST_CASE("oracle equivalence and round trip on 1000 random clusters in 16^3") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % (trial % 10 == 0 ? 4096 : 64);
        auto pts = sorted_unique(test::random_points(rng, n, 16));
        const auto mode = trial % 2 ? KMode::mixed12 : KMode::octree8;
        const auto sched = default_schedule(4, mode);
        const auto seq = build_sequence(pts, sched);
        REQUIRE(seq.symbols == oracle_sequence(pts, splits_of(sched)));
        REQUIRE(reconstruct_points(seq) == pts);
        for (auto s : seq.symbols) REQUIRE(s != 0);
    }
}

TEST_CASE("ten points in 8^3 with three octree levels match the oracle") {
    std::mt19937_64 rng(10);
    const auto pts = sorted_unique(test::random_points(rng, 10, 8));
    CHECK(build_sequence(pts, octree(3)).symbols == oracle_sequence(pts, splits_of(octree(3))));
}

TEST_CASE("decodability invariant and length bound") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int depth = 1 + static_cast<int>(rng() % 6);
        const auto pts = sorted_unique(test::random_points(rng, 1 + rng() % 300, 1u << depth));
        const auto sched = default_schedule(depth, trial % 3 ? KMode::octree8 : KMode::mixed12);
        const auto seq = build_sequence(pts, sched);
        // cascade by hand
        std::size_t pos = 0, count = 1, bound = 0, reach = 1;
        for (std::size_t l = 0; l < sched.levels.size(); ++l) {
            std::size_t next = 0;
            for (std::size_t i = 0; i < count; ++i) next += static_cast<std::size_t>(std::popcount(seq.symbols[pos + i]));
            pos += count;
            reach *= static_cast<std::size_t>(sched.levels[l].k());
            bound += std::min(pts.size(), reach / static_cast<std::size_t>(sched.levels[l].k()));
            count = next;
        }
        CHECK(pos == seq.symbols.size());
        CHECK(count == pts.size());
        CHECK(seq.symbols.size() <= bound);
    }
}

TEST_CASE("mixed12 padding and deep clusters round trip") {
    std::mt19937_64 rng(3);
    for (int depth : {1, 5, 9, 12}) {
        const auto pts = sorted_unique(test::random_points(rng, 2000, 1u << depth));
        for (auto mode : {KMode::octree8, KMode::mixed12}) {
            const auto sched = default_schedule(depth, mode);
            CHECK(reconstruct_points(build_sequence(pts, sched)) == pts);
        }
    }
}

TEST_CASE("thin plane cluster at depth 16") {
    std::vector<Point3> pts;
    for (std::uint32_t i = 0; i < 1000; ++i) pts.push_back({i * 65, 65535 - i * 7, 40000});
    pts = sorted_unique(pts);
    const auto sched = default_schedule(16, KMode::mixed12);
    CHECK(reconstruct_points(build_sequence(pts, sched)) == pts);
}
