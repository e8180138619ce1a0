// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_SYNTHGEN_HPP
#define KPCC_SYNTHGEN_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kpcc/point_cloud.hpp"

namespace kpcc {

enum class Shape { plane, sphere, box, box_union, noise };

std::string_view to_string(Shape s);
Shape parse_shape(std::string_view name); // throws ParameterError

/// Unset fields are derived from the seed (or take the documented default).
struct ShapeParams {
    std::optional<int> level;        // plane: z at the grid centre; default 2^d / 2
    double tilt_x = 0.0;             // plane: dz/dx
    double tilt_y = 0.0;             // plane: dz/dy
    std::optional<double> radius;    // sphere: default 0.3 * 2^d, seeded jitter
    std::optional<Point3> box_lo;    // box: default (0,0,0)
    std::optional<Point3> box_hi;    // box: default 2^d - 1 on every axis (inclusive)
    int boxes = 4;                   // box_union: number of hollow boxes
    std::size_t count = 1000;        // noise: number of samples (before dedup)
};

/// Deterministic voxel cloud at bit depth `depth` for (shape, params, seed).
///   plane     - z = level + round(tilt_x*(x - c) + tilt_y*(y - c)), c = 2^d / 2
///   sphere    - voxels whose centre lies within 1/2 of the sphere surface;
///               radius 0 gives the single centre voxel
///   box       - solid axis-aligned box
///   box_union - union of hollow box surfaces with seeded corners
///   noise     - uniform samples
PointCloud gen(Shape shape, const ShapeParams& params, int depth, std::uint64_t seed);

/// Reference occupancy serialization used to check the optimized tree code:
/// plain recursive subdivision collecting (level, path, symbol) records, then
/// a stable sort into level order. `splits` holds (sx, sy, sz) per level.
/// Shares no code with the K-tree module.
std::vector<std::uint16_t> oracle_sequence(std::span<const Point3> points,
                                           std::span<const std::array<int, 3>> splits);

} // namespace kpcc

#endif // KPCC_SYNTHGEN_HPP
