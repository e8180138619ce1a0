// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_POINT_CLOUD_HPP
#define KPCC_POINT_CLOUD_HPP

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kpcc {

/// Integer voxel coordinate.
struct Point3 {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t z = 0;

    friend constexpr auto operator<=>(const Point3&, const Point3&) = default;

    constexpr std::uint32_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

inline constexpr int kMaxBitDepth = 16;

/// Smallest d >= 1 with value < 2^d.
int bits_to_cover(std::uint64_t value);

/// Deduplicated set of voxel coordinates, all below 2^bit_depth.
///
/// Points are kept in lexicographic (x, y, z) order, which is also the
/// canonical order used when the cloud is written to disk.
class PointCloud {
public:
    PointCloud() = default;

    /// Sorts and deduplicates `points`. Throws DomainError if a coordinate
    /// does not fit `bit_depth`, ParameterError if `bit_depth` is outside [1, 16].
    PointCloud(std::vector<Point3> points, int bit_depth);

    /// Builds a cloud whose bit depth is the smallest one covering the points.
    static PointCloud with_min_depth(std::vector<Point3> points);

    const std::vector<Point3>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    int bit_depth() const { return bit_depth_; }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;

private:
    std::vector<Point3> points_;
    int bit_depth_ = 1;
};

/// Reads an ASCII or binary-little-endian PLY file. Vertex coordinates are
/// rounded half toward +infinity and deduplicated.
PointCloud load_ply(const std::filesystem::path& path);

/// Writes a binary-little-endian PLY with uint32 x/y/z in canonical order.
/// The declared bit depth travels in a header comment so that
/// load_ply(save_ply(pc)) == pc.
void save_ply(const PointCloud& pc, const std::filesystem::path& path);

/// Uniformly scales the bounding box so its longest axis spans
/// [0, 2^target_depth - 1], rounds, and deduplicates.
PointCloud voxelize(std::span<const std::array<double, 3>> raw_points, int target_depth);

/// Round half toward +infinity, as used by load_ply and voxelize.
double round_half_up(double v);

} // namespace kpcc

#endif // KPCC_POINT_CLOUD_HPP
