// SPDX-License-Identifier: Apache-2.0

#include "kpcc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "kpcc/errors.hpp"

namespace kpcc {

std::string_view to_string(Shape s) {
    switch (s) {
    case Shape::plane: return "plane";
    case Shape::sphere: return "sphere";
    case Shape::box: return "box";
    case Shape::box_union: return "box_union";
    case Shape::noise: return "noise";
    }
    return "unknown";
}

Shape parse_shape(std::string_view name) {
    if (name == "plane") return Shape::plane;
    if (name == "sphere") return Shape::sphere;
    if (name == "box") return Shape::box;
    if (name == "box_union" || name == "boxes") return Shape::box_union;
    if (name == "noise") return Shape::noise;
    throw ParameterError("unknown shape '" + std::string(name) + "'");
}

namespace {

// Portable draws; std distributions differ between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::int64_t range(std::int64_t lo, std::int64_t hi) { // inclusive
        return lo + static_cast<std::int64_t>(unit() * static_cast<double>(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
};

void add_if_inside(std::vector<Point3>& out, std::int64_t x, std::int64_t y, std::int64_t z, std::int64_t n) {
    if (x >= 0 && y >= 0 && z >= 0 && x < n && y < n && z < n) {
        out.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(z)});
    }
}

// Largest k >= 0 with k*k < bound (bound > 0).
std::int64_t isqrt_below(double bound) {
    auto k = static_cast<std::int64_t>(std::sqrt(bound));
    while (k > 0 && static_cast<double>(k * k) >= bound) --k;
    while (static_cast<double>((k + 1) * (k + 1)) < bound) ++k;
    return k;
}

// Smallest k >= 0 with k*k >= bound.
std::int64_t isqrt_at_least(double bound) {
    if (bound <= 0.0) return 0;
    auto k = static_cast<std::int64_t>(std::sqrt(bound));
    while (k > 0 && static_cast<double>((k - 1) * (k - 1)) >= bound) --k;
    while (static_cast<double>(k * k) < bound) ++k;
    return k;
}

void sphere_shell(std::vector<Point3>& out, std::int64_t cx, std::int64_t cy, std::int64_t cz, double r, std::int64_t n) {
    if (r <= 0.0) {
        add_if_inside(out, cx, cy, cz, n);
        return;
    }
    const double lo2 = r > 0.5 ? (r - 0.5) * (r - 0.5) : 0.0;
    const double hi2 = (r + 0.5) * (r + 0.5);
    const auto reach = static_cast<std::int64_t>(std::ceil(r + 0.5));
    for (std::int64_t dx = -reach; dx <= reach; ++dx) {
        for (std::int64_t dy = -reach; dy <= reach; ++dy) {
            const double planar = static_cast<double>(dx * dx + dy * dy);
            const double rem_hi = hi2 - planar;
            if (rem_hi <= 0.0) continue;
            const std::int64_t dz_max = isqrt_below(rem_hi);
            const std::int64_t dz_min = isqrt_at_least(lo2 - planar);
            for (std::int64_t dz = dz_min; dz <= dz_max; ++dz) {
                add_if_inside(out, cx + dx, cy + dy, cz + dz, n);
                if (dz != 0) add_if_inside(out, cx + dx, cy + dy, cz - dz, n);
            }
        }
    }
}

void hollow_box(std::vector<Point3>& out, const std::array<std::int64_t, 3>& lo, const std::array<std::int64_t, 3>& hi,
                std::int64_t n) {
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
            const bool edge_xy = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1];
            if (edge_xy) {
                for (std::int64_t z = lo[2]; z <= hi[2]; ++z) add_if_inside(out, x, y, z, n);
            } else {
                add_if_inside(out, x, y, lo[2], n);
                add_if_inside(out, x, y, hi[2], n);
            }
        }
    }
}

} // namespace

PointCloud gen(Shape shape, const ShapeParams& params, int depth, std::uint64_t seed) {
    if (depth < 1 || depth > kMaxBitDepth) throw ParameterError("depth outside [1, 16]");
    const std::int64_t n = std::int64_t{1} << depth;
    Rng rng(seed);
    std::vector<Point3> pts;
    switch (shape) {
    case Shape::plane: {
        const std::int64_t level = params.level.value_or(static_cast<int>(n / 2));
        const double c = static_cast<double>(n / 2);
        for (std::int64_t x = 0; x < n; ++x) {
            for (std::int64_t y = 0; y < n; ++y) {
                const double dz = params.tilt_x * (static_cast<double>(x) - c) + params.tilt_y * (static_cast<double>(y) - c);
                add_if_inside(pts, x, y, level + static_cast<std::int64_t>(std::floor(dz + 0.5)), n);
            }
        }
        break;
    }
    case Shape::sphere: {
        const double radius = params.radius.value_or(0.3 * static_cast<double>(n) * (0.8 + 0.4 * rng.unit()));
        const std::int64_t jitter = std::max<std::int64_t>(1, n / 16);
        const std::int64_t cx = n / 2 + rng.range(-jitter, jitter);
        const std::int64_t cy = n / 2 + rng.range(-jitter, jitter);
        const std::int64_t cz = n / 2 + rng.range(-jitter, jitter);
        sphere_shell(pts, params.radius && *params.radius <= 0.0 ? n / 2 : cx,
                     params.radius && *params.radius <= 0.0 ? n / 2 : cy,
                     params.radius && *params.radius <= 0.0 ? n / 2 : cz, radius, n);
        break;
    }
    case Shape::box: {
        const Point3 lo = params.box_lo.value_or(Point3{0, 0, 0});
        const auto top = static_cast<std::uint32_t>(n - 1);
        const Point3 hi = params.box_hi.value_or(Point3{top, top, top});
        for (std::int64_t x = lo.x; x <= std::min<std::int64_t>(hi.x, n - 1); ++x) {
            for (std::int64_t y = lo.y; y <= std::min<std::int64_t>(hi.y, n - 1); ++y) {
                for (std::int64_t z = lo.z; z <= std::min<std::int64_t>(hi.z, n - 1); ++z) add_if_inside(pts, x, y, z, n);
            }
        }
        break;
    }
    case Shape::box_union: {
        for (int b = 0; b < std::max(1, params.boxes); ++b) {
            std::array<std::int64_t, 3> lo{}, hi{};
            for (int a = 0; a < 3; ++a) {
                const std::int64_t size = rng.range(std::max<std::int64_t>(1, n / 8), std::max<std::int64_t>(1, n / 2));
                lo[static_cast<std::size_t>(a)] = rng.range(0, n - 1 - size);
                hi[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)] + size;
            }
            hollow_box(pts, lo, hi, n);
        }
        break;
    }
    case Shape::noise: {
        for (std::size_t i = 0; i < std::max<std::size_t>(1, params.count); ++i) {
            add_if_inside(pts, rng.range(0, n - 1), rng.range(0, n - 1), rng.range(0, n - 1), n);
        }
        break;
    }
    }
    if (pts.empty()) add_if_inside(pts, n / 2, n / 2, n / 2, n);
    return PointCloud(std::move(pts), depth);
}

// ---------------------------------------------------------------------------
// oracle

namespace {

struct OracleRecord {
    std::size_t level;
    std::vector<int> path;
    std::uint16_t symbol;
};

void oracle_visit(const std::vector<Point3>& pts, std::array<std::uint64_t, 3> origin, std::size_t level,
                  std::vector<int>& path, std::span<const std::array<int, 3>> splits, std::vector<OracleRecord>& out) {
    if (level == splits.size()) return;
    // size of one child along each axis = product of the remaining splits
    std::array<std::uint64_t, 3> child{1, 1, 1};
    for (std::size_t l = level + 1; l < splits.size(); ++l) {
        for (int a = 0; a < 3; ++a) child[static_cast<std::size_t>(a)] *= static_cast<std::uint64_t>(splits[l][static_cast<std::size_t>(a)]);
    }
    const auto& s = splits[level];
    std::uint16_t symbol = 0;
    std::vector<std::pair<int, std::array<std::uint64_t, 3>>> occupied;
    for (int ix = 0; ix < s[0]; ++ix) {
        for (int iy = 0; iy < s[1]; ++iy) {
            for (int iz = 0; iz < s[2]; ++iz) {
                const std::array<std::uint64_t, 3> lo = {origin[0] + static_cast<std::uint64_t>(ix) * child[0],
                                                         origin[1] + static_cast<std::uint64_t>(iy) * child[1],
                                                         origin[2] + static_cast<std::uint64_t>(iz) * child[2]};
                const bool any = std::any_of(pts.begin(), pts.end(), [&](const Point3& p) {
                    return p.x >= lo[0] && p.x < lo[0] + child[0] && p.y >= lo[1] && p.y < lo[1] + child[1] &&
                           p.z >= lo[2] && p.z < lo[2] + child[2];
                });
                if (any) {
                    const int bit = ix * s[1] * s[2] + iy * s[2] + iz;
                    symbol = static_cast<std::uint16_t>(symbol | (1u << bit));
                    occupied.emplace_back(bit, lo);
                }
            }
        }
    }
    out.push_back({level, path, symbol});
    for (const auto& [bit, lo] : occupied) {
        std::vector<Point3> inside;
        for (const auto& p : pts) {
            if (p.x >= lo[0] && p.x < lo[0] + child[0] && p.y >= lo[1] && p.y < lo[1] + child[1] && p.z >= lo[2] &&
                p.z < lo[2] + child[2]) {
                inside.push_back(p);
            }
        }
        path.push_back(bit);
        oracle_visit(inside, lo, level + 1, path, splits, out);
        path.pop_back();
    }
}

} // namespace

std::vector<std::uint16_t> oracle_sequence(std::span<const Point3> points, std::span<const std::array<int, 3>> splits) {
    std::vector<Point3> pts(points.begin(), points.end());
    std::vector<OracleRecord> records;
    std::vector<int> path;
    if (!pts.empty()) oracle_visit(pts, {0, 0, 0}, 0, path, splits, records);
    std::stable_sort(records.begin(), records.end(), [](const OracleRecord& a, const OracleRecord& b) {
        if (a.level != b.level) return a.level < b.level;
        return a.path < b.path;
    });
    std::vector<std::uint16_t> symbols;
    symbols.reserve(records.size());
    for (const auto& r : records) symbols.push_back(r.symbol);
    return symbols;
}

} // namespace kpcc
