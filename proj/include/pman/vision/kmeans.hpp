#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pman::vision {

struct KMeansResult {
    int dim = 0;
    std::vector<int> assignment;
    std::vector<std::vector<std::size_t>> members;
    std::vector<double> centroids;  // K x dim
    double inertia = 0.0;
    std::vector<double> inertia_trace;
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding over `points` (n x dim, row-major).
/// Ties go to the lowest cluster index; an empty cluster takes the point
/// farthest from its centroid. Throws ValidationError when n < K.
KMeansResult kmeans_flat(std::span<const double> points, int dim, int K, std::uint64_t seed,
                         int max_iter = 100);

KMeansResult kmeans(std::span<const std::array<double, 2>> points, int K, std::uint64_t seed);

}  // namespace pman::vision
