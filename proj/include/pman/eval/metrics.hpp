#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pman/ad/tensor.hpp"

namespace pman::eval {

/// Row-major n_query x n_gallery distances.
struct DistanceMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;

    double at(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
    void validate() const;
};

/// 1 - cos(q, g) for every query/gallery row pair.
DistanceMatrix cosine_distance_matrix(const ad::Tensor<float>& query, const ad::Tensor<float>& gallery);

/// l1 * D_G + l2 * D_S (+ l3 * D_T). Omitting D_T requires l3 == 0.
DistanceMatrix fuse_distances(const DistanceMatrix& d_g, const DistanceMatrix& d_s, const DistanceMatrix* d_t,
                              const std::array<double, 3>& lambda);

/// Identity and camera of each query and gallery item. Camera lists may be
/// empty; when present, same-identity same-camera gallery items are excluded
/// from a query's ranking. Gallery items with the query's own name are
/// always excluded.
struct Relevance {
    std::vector<int> query_ids, gallery_ids;
    std::vector<int> query_cams, gallery_cams;
    std::vector<std::string> query_names, gallery_names;

    void validate(const DistanceMatrix& d) const;
};

struct EvalReport {
    double mAP = 0.0;
    double cmc1 = 0.0;
    double cmc5 = 0.0;
    std::size_t valid_queries = 0;
    std::size_t dropped_queries = 0;

    /// "metric,value" lines.
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

/// Gallery order for one query: ascending distance, ties by gallery index,
/// excluded items removed.
std::vector<std::size_t> ranking(const DistanceMatrix& d, const Relevance& rel, std::size_t query);

/// Mean AP over queries with at least one relevant item.
double compute_map(const DistanceMatrix& d, const Relevance& rel);
/// CMC@r for each r in `ranks`, over queries with at least one relevant item.
std::vector<double> compute_cmc(const DistanceMatrix& d, const Relevance& rel, const std::vector<int>& ranks);

EvalReport score(const DistanceMatrix& d, const Relevance& rel);

}  // namespace pman::eval
