// SPDX-License-Identifier: Apache-2.0

#include "kpcc/cluster.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <limits>
#include <string>
#include <thread>

#include "kpcc/errors.hpp"

namespace kpcc {

namespace {

using Coord = std::array<std::int64_t, 3>;

std::int64_t dist2(const Point3& p, const Coord& c) {
    const std::int64_t dx = static_cast<std::int64_t>(p.x) - c[0];
    const std::int64_t dy = static_cast<std::int64_t>(p.y) - c[1];
    const std::int64_t dz = static_cast<std::int64_t>(p.z) - c[2];
    return dx * dx + dy * dy + dz * dz;
}

Coord to_coord(const Point3& p) { return {p.x, p.y, p.z}; }

// Runs fn(begin, end) over [0, n) split into `threads` contiguous blocks.
template <typename Fn>
void parallel_blocks(std::size_t n, int threads, Fn&& fn) {
    const std::size_t t = static_cast<std::size_t>(std::max(1, threads));
    if (t == 1 || n < 4096) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t block = (n + t - 1) / t;
    for (std::size_t b = 0; b < n; b += block) {
        pool.emplace_back([&fn, b, block, n] { fn(b, std::min(n, b + block)); });
    }
}

std::vector<Coord> farthest_point_init(const std::vector<Point3>& pts, int k) {
    std::vector<Coord> centroids;
    centroids.reserve(static_cast<std::size_t>(k));
    centroids.push_back(to_coord(pts.front()));
    std::vector<std::int64_t> nearest(pts.size(), std::numeric_limits<std::int64_t>::max());
    for (int c = 1; c < k; ++c) {
        std::size_t best = 0;
        std::int64_t best_d = -1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            nearest[i] = std::min(nearest[i], dist2(pts[i], centroids.back()));
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        centroids.push_back(to_coord(pts[best]));
    }
    return centroids;
}

// Exact nearest-centroid query. Centroids are scanned outward from the
// point's x position and the scan stops once the x gap alone exceeds the best
// distance, so the answer (ties to the lower index) matches a full scan.
class NearestCentroid {
public:
    explicit NearestCentroid(const std::vector<Coord>& centroids) : centroids_(centroids) {
        order_.resize(centroids.size());
        for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
            return centroids[a][0] != centroids[b][0] ? centroids[a][0] < centroids[b][0] : a < b;
        });
        xs_.reserve(order_.size());
        for (auto i : order_) xs_.push_back(centroids[i][0]);
    }

    std::uint32_t operator()(const Point3& p) const {
        const std::int64_t px = p.x;
        const auto start = static_cast<std::ptrdiff_t>(std::lower_bound(xs_.begin(), xs_.end(), px) - xs_.begin());
        std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
        std::uint32_t best = 0;
        auto consider = [&](std::ptrdiff_t j) {
            const std::uint32_t c = order_[static_cast<std::size_t>(j)];
            const std::int64_t d = dist2(p, centroids_[c]);
            if (d < best_d || (d == best_d && c < best)) {
                best_d = d;
                best = c;
            }
        };
        const auto n = static_cast<std::ptrdiff_t>(order_.size());
        std::ptrdiff_t lo = start - 1;
        std::ptrdiff_t hi = start;
        bool lo_open = lo >= 0;
        bool hi_open = hi < n;
        while (lo_open || hi_open) {
            if (hi_open) {
                const std::int64_t gap = xs_[static_cast<std::size_t>(hi)] - px;
                if (gap * gap > best_d) {
                    hi_open = false;
                } else {
                    consider(hi++);
                    hi_open = hi < n;
                }
            }
            if (lo_open) {
                const std::int64_t gap = px - xs_[static_cast<std::size_t>(lo)];
                if (gap * gap > best_d) {
                    lo_open = false;
                } else {
                    consider(lo--);
                    lo_open = lo >= 0;
                }
            }
        }
        return best;
    }

private:
    const std::vector<Coord>& centroids_;
    std::vector<std::uint32_t> order_;
    std::vector<std::int64_t> xs_;
};

// floor(sum / n + 1/2) for non-negative sums
std::int64_t rounded_mean(std::int64_t sum, std::int64_t n) { return (2 * sum + n) / (2 * n); }

} // namespace

Cluster normalize_cluster(std::vector<Point3> global_points) {
    Cluster c;
    if (global_points.empty()) return c;
    Point3 lo{std::numeric_limits<std::uint32_t>::max(), std::numeric_limits<std::uint32_t>::max(),
              std::numeric_limits<std::uint32_t>::max()};
    for (const auto& p : global_points) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        lo.z = std::min(lo.z, p.z);
    }
    std::uint32_t max_local = 0;
    for (auto& p : global_points) {
        p = {p.x - lo.x, p.y - lo.y, p.z - lo.z};
        max_local = std::max({max_local, p.x, p.y, p.z});
    }
    std::sort(global_points.begin(), global_points.end());
    global_points.erase(std::unique(global_points.begin(), global_points.end()), global_points.end());
    c.offset = lo;
    c.local_points = std::move(global_points);
    c.local_depth = bits_to_cover(max_local);
    return c;
}

ClusterSet cluster_points(const PointCloud& pc, int num_clusters, std::uint64_t /*seed*/, int threads) {
    const auto& pts = pc.points();
    if (num_clusters < 1 || static_cast<std::size_t>(num_clusters) > pts.size()) {
        throw ParameterError("num_clusters=" + std::to_string(num_clusters) + " must lie in [1, " +
                             std::to_string(pts.size()) + "]");
    }
    const auto k = static_cast<std::size_t>(num_clusters);
    std::vector<Coord> centroids = farthest_point_init(pts, num_clusters);
    std::vector<std::uint32_t> assign(pts.size(), std::numeric_limits<std::uint32_t>::max());

    for (int iter = 0; iter < 50; ++iter) {
        const NearestCentroid nearest(centroids);
        std::atomic<bool> changed{false};
        parallel_blocks(pts.size(), threads, [&](std::size_t b, std::size_t e) {
            bool local_change = false;
            for (std::size_t i = b; i < e; ++i) {
                const std::uint32_t best = nearest(pts[i]);
                if (assign[i] != best) {
                    assign[i] = best;
                    local_change = true;
                }
            }
            if (local_change) changed.store(true, std::memory_order_relaxed);
        });
        if (!changed.load()) break;

        // Integer sums are order independent, so a sequential pass is exact.
        std::vector<std::array<std::int64_t, 3>> sums(k, {0, 0, 0});
        std::vector<std::int64_t> counts(k, 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto& s = sums[assign[i]];
            s[0] += pts[i].x;
            s[1] += pts[i].y;
            s[2] += pts[i].z;
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue; // empty: keep previous centroid
            for (int a = 0; a < 3; ++a) centroids[c][a] = rounded_mean(sums[c][a], counts[c]);
        }
    }

    std::vector<std::vector<Point3>> groups(k);
    for (std::size_t i = 0; i < pts.size(); ++i) groups[assign[i]].push_back(pts[i]);

    ClusterSet cs;
    cs.source_depth = pc.bit_depth();
    for (auto& g : groups) {
        if (!g.empty()) cs.clusters.push_back(normalize_cluster(std::move(g)));
    }
    std::sort(cs.clusters.begin(), cs.clusters.end(), [](const Cluster& a, const Cluster& b) {
        if (a.offset != b.offset) return a.offset < b.offset;
        if (a.local_points.size() != b.local_points.size()) return a.local_points.size() > b.local_points.size();
        return a.local_points < b.local_points;
    });
    return cs;
}

PointCloud merge_clusters(const ClusterSet& cs) {
    std::vector<Point3> all;
    std::size_t total = 0;
    for (const auto& c : cs.clusters) total += c.local_points.size();
    all.reserve(total);
    const std::uint64_t limit = std::uint64_t{1} << cs.source_depth;
    for (const auto& c : cs.clusters) {
        for (const auto& p : c.local_points) {
            const std::uint64_t x = std::uint64_t{c.offset.x} + p.x;
            const std::uint64_t y = std::uint64_t{c.offset.y} + p.y;
            const std::uint64_t z = std::uint64_t{c.offset.z} + p.z;
            if (x >= limit || y >= limit || z >= limit) {
                throw IntegrityError("merged point exceeds source bit depth " + std::to_string(cs.source_depth));
            }
            all.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(z)});
        }
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw IntegrityError("clusters overlap in global coordinates");
    }
    return PointCloud(std::move(all), cs.source_depth);
}

} // namespace kpcc
