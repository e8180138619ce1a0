// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_CLUSTER_HPP
#define KPCC_CLUSTER_HPP

#include <cstdint>
#include <vector>

#include "kpcc/point_cloud.hpp"

namespace kpcc {

/// One cluster after offset normalization: every global point equals
/// `offset + local` for some local point, and the local minimum on each
/// axis is zero.
struct Cluster {
    Point3 offset;
    std::vector<Point3> local_points; // sorted, unique
    int local_depth = 1;              // smallest d covering the local extent

    friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct ClusterSet {
    std::vector<Cluster> clusters;
    int source_depth = 1;

    friend bool operator==(const ClusterSet&, const ClusterSet&) = default;
};

/// Normalizes a group of global points by their componentwise minimum.
Cluster normalize_cluster(std::vector<Point3> global_points);

/// Deterministic k-means on integer coordinates.
///
/// Centroids start from farthest-point sampling seeded at the lexicographically
/// smallest point. Lloyd iterations run until the assignment stops changing or
/// 50 iterations have passed; centroids are the integer-rounded member means and
/// every distance is an exact squared Euclidean integer. Ties go to the lower
/// centroid index. Empty clusters are dropped, so the result may hold fewer
/// than `num_clusters` clusters. `threads` only affects speed.
///
/// `seed` is accepted for interface stability; the initialization is fully
/// determined by the cloud, so it does not change the partition.
ClusterSet cluster_points(const PointCloud& pc, int num_clusters, std::uint64_t seed, int threads = 1);

/// Union of `offset + local` over all clusters. Throws IntegrityError when two
/// clusters claim the same global coordinate or a point exceeds source_depth.
PointCloud merge_clusters(const ClusterSet& cs);

} // namespace kpcc

#endif // KPCC_CLUSTER_HPP
