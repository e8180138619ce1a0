// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_KTREE_HPP
#define KPCC_KTREE_HPP

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kpcc/point_cloud.hpp"

namespace kpcc {

/// Per-level subdivision factors along x, y, z. A cell splits into
/// sx*sy*sz children; that product is the level's branching factor K.
struct Split {
    std::uint8_t sx = 2;
    std::uint8_t sy = 2;
    std::uint8_t sz = 2;

    constexpr int k() const { return int{sx} * sy * sz; }
    friend constexpr bool operator==(const Split&, const Split&) = default;
};

enum class KMode : std::uint8_t { octree8 = 0, mixed12 = 1 };

std::string_view to_string(KMode mode);
KMode parse_k_mode(std::string_view name); // throws ParameterError

struct SplitSchedule {
    std::vector<Split> levels;

    /// Extent of the root cell along `axis` (product of that axis' factors).
    std::uint64_t extent(int axis) const;
    /// Largest K over all levels.
    int max_k() const;
    /// Throws ParameterError unless every level has 2 <= K <= 16 and no factor is zero.
    void validate() const;

    friend bool operator==(const SplitSchedule&, const SplitSchedule&) = default;
};

/// octree8: `local_depth` levels of (2,2,2).
/// mixed12: `local_depth` levels of (2,2,3); z resolves 3^d >= 2^d, the
/// surplus being empty padding above the data.
SplitSchedule default_schedule(int local_depth, KMode mode);

/// Breadth-first occupancy symbols of one cluster's tree.
struct OccupancySequence {
    std::vector<std::uint16_t> symbols;
    SplitSchedule schedule;

    /// Symbol count per level, derived by the popcount cascade.
    /// Throws IntegrityError if the symbols do not satisfy it.
    std::vector<std::size_t> level_counts() const;
};

/// Child slot of a subcell: c = (ix*sy + iy)*sz + iz.
constexpr int child_index(const Split& s, int ix, int iy, int iz) { return (ix * s.sy + iy) * s.sz + iz; }

/// Serializes the occupancy tree of `local_points` level by level. Bit c of a
/// symbol is set iff child c holds a point; occupied children are visited in
/// ascending child index. Throws DomainError for points outside the root cell.
OccupancySequence build_sequence(std::span<const Point3> local_points, const SplitSchedule& schedule);

/// Replays the breadth-first order using only popcounts: each symbol's set
/// bits say how many child cells join the next level and where. Returns the
/// points sorted lexicographically. Throws IntegrityError, naming the level,
/// for zero or oversized symbols, truncated input or trailing symbols.
std::vector<Point3> reconstruct_points(std::span<const std::uint16_t> symbols, const SplitSchedule& schedule);

inline std::vector<Point3> reconstruct_points(const OccupancySequence& seq) {
    return reconstruct_points(seq.symbols, seq.schedule);
}

} // namespace kpcc

#endif // KPCC_KTREE_HPP
