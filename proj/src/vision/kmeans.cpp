#include "pman/vision/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "pman/error.hpp"

namespace pman::vision {

namespace {

double sq_dist(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

}  // namespace

KMeansResult kmeans_flat(std::span<const double> points, int dim, int K, std::uint64_t seed,
                         int max_iter) {
    if (dim < 1 || points.size() % static_cast<std::size_t>(dim) != 0) {
        throw ValidationError("kmeans: point buffer is not a multiple of the dimension");
    }
    const std::size_t n = points.size() / static_cast<std::size_t>(dim);
    if (K < 1) throw ValidationError("kmeans: K must be positive");
    if (n < static_cast<std::size_t>(K)) {
        throw ValidationError("kmeans: " + std::to_string(n) + " points for K=" + std::to_string(K));
    }
    const auto pt = [&](std::size_t i) { return points.data() + i * static_cast<std::size_t>(dim); };
    const auto k_sz = static_cast<std::size_t>(K);
    const auto d_sz = static_cast<std::size_t>(dim);

    KMeansResult r;
    r.dim = dim;
    r.centroids.assign(k_sz * d_sz, 0.0);
    auto cen = [&](std::size_t k) { return r.centroids.data() + k * d_sz; };

    // k-means++ seeding
    std::mt19937_64 rng(seed);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::copy(pt(first), pt(first) + dim, cen(0));
    for (std::size_t k = 1; k < k_sz; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(pt(i), cen(k - 1), dim));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                if (u < d2[i]) {
                    pick = i;
                    break;
                }
                u -= d2[i];
            }
            while (d2[pick] <= 0.0) --pick;  // rounding fell off the end
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        std::copy(pt(pick), pt(pick) + dim, cen(k));
    }

    r.assignment.assign(n, -1);
    auto assign = [&]() {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(pt(i), cen(0), dim);
            for (std::size_t k = 1; k < k_sz; ++k) {
                const double dd = sq_dist(pt(i), cen(k), dim);
                if (dd < bd) {
                    bd = dd;
                    best = static_cast<int>(k);
                }
            }
            if (r.assignment[i] != best) changed = true;
            r.assignment[i] = best;
        }
        return changed;
    };
    auto inertia = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += sq_dist(pt(i), cen(static_cast<std::size_t>(r.assignment[i])), dim);
        return s;
    };
    auto fix_empty = [&]() {
        for (std::size_t k = 0; k < k_sz; ++k) {
            std::vector<std::size_t> count(k_sz, 0);
            for (int a : r.assignment) ++count[static_cast<std::size_t>(a)];
            if (count[k] > 0) continue;
            std::size_t far = n;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto a = static_cast<std::size_t>(r.assignment[i]);
                if (count[a] < 2) continue;
                const double dd = sq_dist(pt(i), cen(a), dim);
                if (dd > fd) {
                    fd = dd;
                    far = i;
                }
            }
            if (far == n) throw InvariantError("kmeans: no point available for an empty cluster");
            r.assignment[far] = static_cast<int>(k);
            std::copy(pt(far), pt(far) + dim, cen(k));
        }
    };
    auto update = [&]() {
        std::vector<double> sum(k_sz * d_sz, 0.0);
        std::vector<std::size_t> count(k_sz, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = static_cast<std::size_t>(r.assignment[i]);
            ++count[a];
            for (std::size_t d = 0; d < d_sz; ++d) sum[a * d_sz + d] += pt(i)[d];
        }
        for (std::size_t k = 0; k < k_sz; ++k)
            for (std::size_t d = 0; d < d_sz; ++d) cen(k)[d] = sum[k * d_sz + d] / static_cast<double>(count[k]);
    };

    assign();
    fix_empty();
    update();
    r.inertia_trace.push_back(inertia());
    for (r.iterations = 1; r.iterations < max_iter; ++r.iterations) {
        const auto before = r.assignment;
        assign();
        fix_empty();
        if (r.assignment == before) break;
        update();
        r.inertia_trace.push_back(inertia());
    }
    r.inertia = inertia();
    r.members.assign(k_sz, {});
    for (std::size_t i = 0; i < n; ++i) r.members[static_cast<std::size_t>(r.assignment[i])].push_back(i);
    return r;
}

KMeansResult kmeans(std::span<const std::array<double, 2>> points, int K, std::uint64_t seed) {
    std::vector<double> flat;
    flat.reserve(points.size() * 2);
    for (const auto& p : points) flat.insert(flat.end(), p.begin(), p.end());
    return kmeans_flat(flat, 2, K, seed);
}

}  // namespace pman::vision
