#include "pman/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pman/error.hpp"

namespace pman::eval {

void DistanceMatrix::validate() const {
    if (values.size() != rows * cols) throw ShapeError("distance matrix: size does not match dims");
    for (double v : values)
        if (!std::isfinite(v)) throw NonFiniteError("distance matrix: non-finite entry");
}

DistanceMatrix cosine_distance_matrix(const ad::Tensor<float>& q, const ad::Tensor<float>& g) {
    if (q.rank() != 2 || g.rank() != 2 || q.dim(1) != g.dim(1)) {
        throw ShapeError("cosine distance: feature shapes " + ad::shape_str(q.shape()) + " and " +
                         ad::shape_str(g.shape()) + " differ");
    }
    const std::size_t d = q.dim(1);
    auto normalised = [d](const ad::Tensor<float>& t, const char* what) {
        std::vector<double> out(t.numel());
        for (std::size_t r = 0; r < t.dim(0); ++r) {
            double n = 0.0;
            for (std::size_t k = 0; k < d; ++k) n += static_cast<double>(t[r * d + k]) * t[r * d + k];
            n = std::sqrt(n);
            if (!(n > 0.0)) throw ValidationError(std::string("cosine distance: zero-norm ") + what + " vector " +
                                                  std::to_string(r));
            for (std::size_t k = 0; k < d; ++k) out[r * d + k] = t[r * d + k] / n;
        }
        return out;
    };
    const auto qn = normalised(q, "query"), gn = normalised(g, "gallery");
    DistanceMatrix m{q.dim(0), g.dim(0), std::vector<double>(q.dim(0) * g.dim(0))};
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += qn[i * d + k] * gn[j * d + k];
            m.values[i * m.cols + j] = std::clamp(1.0 - dot, 0.0, 2.0);
        }
    return m;
}

DistanceMatrix fuse_distances(const DistanceMatrix& d_g, const DistanceMatrix& d_s, const DistanceMatrix* d_t,
                              const std::array<double, 3>& l) {
    for (double v : l)
        if (!(v >= 0.0)) throw ValidationError("fuse: weights must be non-negative");
    auto same = [&](const DistanceMatrix& o) {
        if (o.rows != d_g.rows || o.cols != d_g.cols) throw ShapeError("fuse: distance matrices differ in shape");
    };
    same(d_s);
    if (d_t) same(*d_t);
    if (!d_t && l[2] != 0.0) throw ValidationError("fuse: teacher weight is non-zero but no teacher distances");
    DistanceMatrix out{d_g.rows, d_g.cols, std::vector<double>(d_g.values.size())};
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double v = l[0] * d_g.values[i] + l[1] * d_s.values[i];
        if (d_t) v += l[2] * d_t->values[i];
        out.values[i] = v;
    }
    return out;
}

void Relevance::validate(const DistanceMatrix& d) const {
    if (query_ids.size() != d.rows || gallery_ids.size() != d.cols) {
        throw ShapeError("relevance: id lists do not match the distance matrix");
    }
    if (query_cams.empty() != gallery_cams.empty()) throw ValidationError("relevance: cameras given for one side only");
    if (!query_cams.empty() && (query_cams.size() != d.rows || gallery_cams.size() != d.cols)) {
        throw ShapeError("relevance: camera lists do not match the distance matrix");
    }
    if (query_names.empty() != gallery_names.empty()) throw ValidationError("relevance: names given for one side only");
    if (!query_names.empty() && (query_names.size() != d.rows || gallery_names.size() != d.cols)) {
        throw ShapeError("relevance: name lists do not match the distance matrix");
    }
}

namespace {

bool excluded(const Relevance& r, std::size_t q, std::size_t g) {
    if (!r.query_names.empty() && r.query_names[q] == r.gallery_names[g]) return true;
    return !r.query_cams.empty() && r.query_ids[q] == r.gallery_ids[g] && r.query_cams[q] == r.gallery_cams[g];
}

}  // namespace

std::vector<std::size_t> ranking(const DistanceMatrix& d, const Relevance& rel, std::size_t q) {
    std::vector<std::size_t> order;
    for (std::size_t g = 0; g < d.cols; ++g)
        if (!excluded(rel, q, g)) order.push_back(g);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.at(q, a) < d.at(q, b); });
    return order;
}

namespace {

struct PerQuery {
    bool valid = false;
    double ap = 0.0;
    std::size_t first_hit = 0;  // 1-based rank
};

PerQuery evaluate_query(const DistanceMatrix& d, const Relevance& rel, std::size_t q) {
    const auto order = ranking(d, rel, q);
    PerQuery r;
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (rel.gallery_ids[order[k]] != rel.query_ids[q]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        if (hits == 1) r.first_hit = k + 1;
    }
    if (hits == 0) return r;
    r.valid = true;
    r.ap = sum / static_cast<double>(hits);
    return r;
}

}  // namespace

double compute_map(const DistanceMatrix& d, const Relevance& rel) { return score(d, rel).mAP; }

std::vector<double> compute_cmc(const DistanceMatrix& d, const Relevance& rel, const std::vector<int>& ranks) {
    d.validate();
    rel.validate(d);
    std::vector<double> cmc(ranks.size(), 0.0);
    std::size_t valid = 0;
    for (std::size_t q = 0; q < d.rows; ++q) {
        const auto r = evaluate_query(d, rel, q);
        if (!r.valid) continue;
        ++valid;
        for (std::size_t i = 0; i < ranks.size(); ++i)
            if (r.first_hit <= static_cast<std::size_t>(ranks[i])) cmc[i] += 1.0;
    }
    for (auto& c : cmc) c = valid ? c / static_cast<double>(valid) : 0.0;
    return cmc;
}

EvalReport score(const DistanceMatrix& d, const Relevance& rel) {
    d.validate();
    rel.validate(d);
    EvalReport rep;
    for (std::size_t q = 0; q < d.rows; ++q) {
        const auto r = evaluate_query(d, rel, q);
        if (!r.valid) {
            ++rep.dropped_queries;
            continue;
        }
        ++rep.valid_queries;
        rep.mAP += r.ap;
        if (r.first_hit <= 1) rep.cmc1 += 1.0;
        if (r.first_hit <= 5) rep.cmc5 += 1.0;
    }
    if (rep.valid_queries) {
        const auto n = static_cast<double>(rep.valid_queries);
        rep.mAP /= n;
        rep.cmc1 /= n;
        rep.cmc5 /= n;
    }
    return rep;
}

std::string EvalReport::to_csv() const {
    char buf[512];
    std::snprintf(buf, sizeof buf, "metric,value\nmAP,%.6f\nCMC@1,%.6f\nCMC@5,%.6f\nvalid_queries,%zu\ndropped_queries,%zu\n",
                  mAP, cmc1, cmc5, valid_queries, dropped_queries);
    return buf;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write report " + path.string());
    out << to_csv();
}

}  // namespace pman::eval
