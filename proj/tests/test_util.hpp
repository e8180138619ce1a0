// SPDX-License-Identifier: Apache-2.0
// Small helpers shared by the unit tests.

#ifndef KPCC_TEST_UTIL_HPP
#define KPCC_TEST_UTIL_HPP

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kpcc/point_cloud.hpp"

namespace kpcc::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("kpcc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::vector<Point3> random_points(std::mt19937_64& rng, std::size_t n, std::uint32_t extent) {
    std::vector<Point3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back({static_cast<std::uint32_t>(rng() % extent), static_cast<std::uint32_t>(rng() % extent),
                       static_cast<std::uint32_t>(rng() % extent)});
    }
    return pts;
}

inline PointCloud random_cloud(std::uint64_t seed, std::size_t n, int depth) {
    std::mt19937_64 rng(seed);
    return PointCloud(random_points(rng, n, 1u << depth), depth);
}

} // namespace kpcc::test

#endif // KPCC_TEST_UTIL_HPP
