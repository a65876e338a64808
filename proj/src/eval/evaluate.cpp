#include "pman/eval/evaluate.hpp"

#include <map>
#include <random>

#include "pman/error.hpp"

namespace pman::eval {

DistanceMatrix bundle_distances(const pmnet::FeatureBundle& q, const pmnet::FeatureBundle& g,
                                const std::array<double, 3>& lambda) {
    const auto d_g = cosine_distance_matrix(q.f_g, g.f_g);
    const bool has_s = q.f_s.dim(1) > 0 && g.f_s.dim(1) > 0;
    const auto d_s = has_s ? cosine_distance_matrix(q.f_s, g.f_s) : DistanceMatrix{d_g.rows, d_g.cols,
                                                                                   std::vector<double>(d_g.values.size())};
    if (q.f_t && g.f_t) {
        const auto d_t = cosine_distance_matrix(*q.f_t, *g.f_t);
        return fuse_distances(d_g, d_s, &d_t, lambda);
    }
    return fuse_distances(d_g, d_s, nullptr, {lambda[0], lambda[1], 0.0});
}

EvalReport evaluate(const pmnet::FeatureBundle& query, const pmnet::FeatureBundle& gallery, const Relevance& rel,
                    const std::array<double, 3>& lambda) {
    return score(bundle_distances(query, gallery, lambda), rel);
}

namespace {
ad::Tensor<float> rows_of(const ad::Tensor<float>& t, const std::vector<std::size_t>& rows) {
    const std::size_t d = t.dim(1);
    ad::Tensor<float> out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= t.dim(0)) throw ShapeError("select_rows: row out of range");
        std::copy_n(t.values().begin() + static_cast<long>(rows[i] * d), d,
                    out.values().begin() + static_cast<long>(i * d));
    }
    return out;
}
}  // namespace

pmnet::FeatureBundle select_rows(const pmnet::FeatureBundle& b, const std::vector<std::size_t>& rows) {
    pmnet::FeatureBundle out;
    out.f_g = rows_of(b.f_g, rows);
    out.f_s = rows_of(b.f_s, rows);
    if (b.f_t) out.f_t = rows_of(*b.f_t, rows);
    return out;
}

EvalReport evaluate_vehicleid(const pmnet::FeatureBundle& test, const std::vector<int>& ids,
                              const std::array<double, 3>& lambda, int repeats, std::uint64_t seed) {
    if (ids.size() != test.f_g.dim(0)) throw ShapeError("vehicleid protocol: id count does not match features");
    if (repeats < 1) throw ValidationError("vehicleid protocol: repeats must be positive");
    std::map<int, std::vector<std::size_t>> by_id;
    for (std::size_t i = 0; i < ids.size(); ++i) by_id[ids[i]].push_back(i);
    std::mt19937_64 rng(seed);
    EvalReport mean;
    for (int r = 0; r < repeats; ++r) {
        std::vector<std::size_t> q_rows, g_rows;
        for (const auto& [id, members] : by_id) {
            const auto pick = std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng);
            for (std::size_t k = 0; k < members.size(); ++k) (k == pick ? g_rows : q_rows).push_back(members[k]);
        }
        Relevance rel;
        for (auto i : q_rows) rel.query_ids.push_back(ids[i]);
        for (auto i : g_rows) rel.gallery_ids.push_back(ids[i]);
        const auto rep = evaluate(select_rows(test, q_rows), select_rows(test, g_rows), rel, lambda);
        mean.mAP += rep.mAP / repeats;
        mean.cmc1 += rep.cmc1 / repeats;
        mean.cmc5 += rep.cmc5 / repeats;
        mean.valid_queries += rep.valid_queries;
        mean.dropped_queries += rep.dropped_queries;
    }
    mean.valid_queries /= static_cast<std::size_t>(repeats);
    mean.dropped_queries /= static_cast<std::size_t>(repeats);
    return mean;
}

}  // namespace pman::eval
