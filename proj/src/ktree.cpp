// SPDX-License-Identifier: Apache-2.0

#include "kpcc/ktree.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <string>

#include "kpcc/errors.hpp"

namespace kpcc {

std::string_view to_string(KMode mode) {
    switch (mode) {
    case KMode::octree8: return "octree8";
    case KMode::mixed12: return "mixed12";
    }
    return "unknown";
}

KMode parse_k_mode(std::string_view name) {
    if (name == "octree8") return KMode::octree8;
    if (name == "mixed12") return KMode::mixed12;
    throw ParameterError("unknown k-mode '" + std::string(name) + "'");
}

std::uint64_t SplitSchedule::extent(int axis) const {
    std::uint64_t e = 1;
    for (const auto& s : levels) e *= axis == 0 ? s.sx : (axis == 1 ? s.sy : s.sz);
    return e;
}

int SplitSchedule::max_k() const {
    int k = 0;
    for (const auto& s : levels) k = std::max(k, s.k());
    return k;
}

void SplitSchedule::validate() const {
    if (levels.empty()) throw ParameterError("split schedule has no levels");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& s = levels[l];
        if (s.sx == 0 || s.sy == 0 || s.sz == 0 || s.k() < 2 || s.k() > 16) {
            throw ParameterError("level " + std::to_string(l) + " has K=" + std::to_string(s.k()) +
                                 ", outside [2, 16]");
        }
    }
    for (int a = 0; a < 3; ++a) {
        if (extent(a) > (std::uint64_t{1} << 48)) throw ParameterError("split schedule extent too large");
    }
}

SplitSchedule default_schedule(int local_depth, KMode mode) {
    if (local_depth < 1 || local_depth > kMaxBitDepth) {
        throw ParameterError("local depth " + std::to_string(local_depth) + " outside [1, 16]");
    }
    const Split level = mode == KMode::mixed12 ? Split{2, 2, 3} : Split{2, 2, 2};
    return SplitSchedule{std::vector<Split>(static_cast<std::size_t>(local_depth), level)};
}

namespace {

// Size of one child cell per axis, for every level.
std::vector<std::array<std::uint64_t, 3>> child_sizes(const SplitSchedule& schedule) {
    std::vector<std::array<std::uint64_t, 3>> sizes(schedule.levels.size());
    std::array<std::uint64_t, 3> below = {1, 1, 1};
    for (std::size_t l = schedule.levels.size(); l-- > 0;) {
        sizes[l] = below;
        below[0] *= schedule.levels[l].sx;
        below[1] *= schedule.levels[l].sy;
        below[2] *= schedule.levels[l].sz;
    }
    return sizes;
}

} // namespace

std::vector<std::size_t> OccupancySequence::level_counts() const {
    std::vector<std::size_t> counts;
    std::size_t expected = 1;
    std::size_t pos = 0;
    for (std::size_t l = 0; l < schedule.levels.size(); ++l) {
        if (pos + expected > symbols.size()) {
            throw IntegrityError("occupancy sequence truncated at level " + std::to_string(l));
        }
        counts.push_back(expected);
        std::size_t next = 0;
        for (std::size_t i = 0; i < expected; ++i) next += static_cast<std::size_t>(std::popcount(symbols[pos + i]));
        pos += expected;
        expected = next;
    }
    if (pos != symbols.size()) throw IntegrityError("occupancy sequence has trailing symbols");
    return counts;
}

OccupancySequence build_sequence(std::span<const Point3> local_points, const SplitSchedule& schedule) {
    schedule.validate();
    if (local_points.empty()) throw EmptyInputError("cannot build a tree over an empty cluster");
    const std::array<std::uint64_t, 3> root = {schedule.extent(0), schedule.extent(1), schedule.extent(2)};

    std::vector<Point3> pts(local_points.begin(), local_points.end());
    for (const auto& p : pts) {
        if (p.x >= root[0] || p.y >= root[1] || p.z >= root[2]) {
            throw DomainError("point (" + std::to_string(p.x) + "," + std::to_string(p.y) + "," +
                              std::to_string(p.z) + ") outside the root cell");
        }
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    const auto sizes = child_sizes(schedule);
    OccupancySequence seq;
    seq.schedule = schedule;

    // Cells of the current level as contiguous ranges of `pts`, in queue order.
    std::vector<std::pair<std::size_t, std::size_t>> cells = {{0, pts.size()}};
    std::vector<std::pair<std::size_t, std::size_t>> next_cells;
    std::vector<Point3> scratch;
    std::array<std::size_t, 17> bucket_start{};

    for (std::size_t l = 0; l < schedule.levels.size(); ++l) {
        const Split& s = schedule.levels[l];
        const auto& cs = sizes[l];
        next_cells.clear();
        for (const auto& [begin, end] : cells) {
            auto slot = [&](const Point3& p) {
                const int ix = static_cast<int>((p.x / cs[0]) % s.sx);
                const int iy = static_cast<int>((p.y / cs[1]) % s.sy);
                const int iz = static_cast<int>((p.z / cs[2]) % s.sz);
                return child_index(s, ix, iy, iz);
            };
            // counting sort of the cell's points by child slot (stable)
            std::array<std::size_t, 16> count{};
            for (std::size_t i = begin; i < end; ++i) ++count[static_cast<std::size_t>(slot(pts[i]))];
            std::uint16_t symbol = 0;
            bucket_start[0] = 0;
            for (int c = 0; c < s.k(); ++c) {
                if (count[static_cast<std::size_t>(c)] != 0) symbol = static_cast<std::uint16_t>(symbol | (1u << c));
                bucket_start[static_cast<std::size_t>(c) + 1] = bucket_start[static_cast<std::size_t>(c)] + count[static_cast<std::size_t>(c)];
            }
            seq.symbols.push_back(symbol);
            scratch.resize(end - begin);
            auto fill = bucket_start;
            for (std::size_t i = begin; i < end; ++i) scratch[fill[static_cast<std::size_t>(slot(pts[i]))]++] = pts[i];
            std::copy(scratch.begin(), scratch.end(), pts.begin() + static_cast<std::ptrdiff_t>(begin));
            for (int c = 0; c < s.k(); ++c) {
                const auto uc = static_cast<std::size_t>(c);
                if (count[uc] != 0) next_cells.emplace_back(begin + bucket_start[uc], begin + bucket_start[uc + 1]);
            }
        }
        cells.swap(next_cells);
    }
    return seq;
}

std::vector<Point3> reconstruct_points(std::span<const std::uint16_t> symbols, const SplitSchedule& schedule) {
    schedule.validate();
    const auto sizes = child_sizes(schedule);

    std::vector<std::array<std::uint64_t, 3>> origins = {{0, 0, 0}};
    std::vector<std::array<std::uint64_t, 3>> next;
    std::size_t pos = 0;
    for (std::size_t l = 0; l < schedule.levels.size(); ++l) {
        const Split& s = schedule.levels[l];
        const auto& cs = sizes[l];
        const std::uint32_t valid_mask = (1u << s.k()) - 1;
        if (symbols.size() - pos < origins.size()) {
            throw IntegrityError("occupancy sequence truncated at level " + std::to_string(l) + ": need " +
                                 std::to_string(origins.size()) + " symbols, " +
                                 std::to_string(symbols.size() - pos) + " left");
        }
        next.clear();
        for (const auto& o : origins) {
            const std::uint32_t symbol = symbols[pos++];
            if (symbol == 0 || (symbol & ~valid_mask) != 0) {
                throw IntegrityError("invalid occupancy symbol " + std::to_string(symbol) + " at level " +
                                     std::to_string(l));
            }
            for (std::uint32_t bits = symbol; bits != 0; bits &= bits - 1) {
                const int c = std::countr_zero(bits);
                const int iz = c % s.sz;
                const int iy = (c / s.sz) % s.sy;
                const int ix = c / (s.sz * s.sy);
                next.push_back({o[0] + static_cast<std::uint64_t>(ix) * cs[0], o[1] + static_cast<std::uint64_t>(iy) * cs[1],
                                o[2] + static_cast<std::uint64_t>(iz) * cs[2]});
            }
        }
        origins.swap(next);
    }
    if (pos != symbols.size()) {
        throw IntegrityError("occupancy sequence has " + std::to_string(symbols.size() - pos) +
                             " trailing symbols after the last level");
    }
    std::vector<Point3> out;
    out.reserve(origins.size());
    for (const auto& o : origins) {
        if (o[0] > UINT32_MAX || o[1] > UINT32_MAX || o[2] > UINT32_MAX) {
            throw IntegrityError("reconstructed coordinate exceeds 32 bits");
        }
        out.push_back({static_cast<std::uint32_t>(o[0]), static_cast<std::uint32_t>(o[1]), static_cast<std::uint32_t>(o[2])});
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace kpcc
