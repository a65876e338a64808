#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pman/error.hpp"
#include "pman/eval/evaluate.hpp"
#include "pman/eval/metrics.hpp"

using namespace pman;
using namespace pman::eval;

namespace {

DistanceMatrix matrix(std::size_t r, std::size_t c, std::vector<double> v) { return {r, c, std::move(v)}; }

ad::Tensor<float> rows(std::size_t n, std::size_t d, std::vector<float> v) { return ad::Tensor<float>({n, d}, std::move(v)); }

}  // namespace

TEST(Cosine, KnownAngles) {
    const auto q = rows(1, 2, {1, 0});
    const auto g = rows(3, 2, {2, 0, 0, 5, -1, 0});
    const auto d = cosine_distance_matrix(q, g);
    EXPECT_NEAR(d.at(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(d.at(0, 1), 1.0, 1e-12);
    EXPECT_NEAR(d.at(0, 2), 2.0, 1e-12);
}

TEST(Cosine, ZeroVectorAndShapeErrors) {
    EXPECT_THROW(cosine_distance_matrix(rows(1, 2, {0, 0}), rows(1, 2, {1, 0})), ValidationError);
    EXPECT_THROW(cosine_distance_matrix(rows(1, 2, {1, 0}), rows(1, 3, {1, 0, 0})), ShapeError);
}

TEST(Fuse, WeightedSum) {
    const auto a = matrix(1, 2, {0.1, 0.5}), b = matrix(1, 2, {1.0, 0.0}), c = matrix(1, 2, {0.2, 0.2});
    const auto f = fuse_distances(a, b, &c, {2, 1, 0.5});
    EXPECT_NEAR(f.at(0, 0), 0.2 + 1.0 + 0.1, 1e-12);
    EXPECT_NEAR(f.at(0, 1), 1.0 + 0.0 + 0.1, 1e-12);
    EXPECT_NO_THROW(fuse_distances(a, b, nullptr, {1, 1, 0}));
    EXPECT_THROW(fuse_distances(a, b, nullptr, {1, 1, 1}), ValidationError);
    EXPECT_THROW(fuse_distances(a, b, &c, {1, -1, 0}), ValidationError);
    EXPECT_THROW(fuse_distances(a, matrix(2, 1, {0, 0}), nullptr, {1, 1, 0}), ShapeError);
}

TEST(Metrics, HandComputedAveragePrecision) {
    // Gallery ranked: g2 (hit), g0 (miss), g3 (hit), g1 (miss).
    const auto d = matrix(1, 4, {0.2, 0.9, 0.1, 0.3});
    Relevance rel;
    rel.query_ids = {7};
    rel.gallery_ids = {1, 2, 7, 7};
    EXPECT_EQ(ranking(d, rel, 0), (std::vector<std::size_t>{2, 0, 3, 1}));
    EXPECT_DOUBLE_EQ(compute_map(d, rel), (1.0 + 2.0 / 3.0) / 2.0);
    EXPECT_EQ(compute_cmc(d, rel, {1, 2}), (std::vector<double>{1.0, 1.0}));
}

TEST(Metrics, FirstHitAtRankThree) {
    const auto d = matrix(1, 4, {0.1, 0.2, 0.3, 0.4});
    Relevance rel;
    rel.query_ids = {1};
    rel.gallery_ids = {0, 0, 1, 0};
    EXPECT_DOUBLE_EQ(compute_map(d, rel), 1.0 / 3.0);
    EXPECT_EQ(compute_cmc(d, rel, {1, 2, 3}), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Metrics, TiesBrokenByGalleryIndex) {
    const auto d = matrix(1, 3, {0.5, 0.5, 0.5});
    Relevance rel;
    rel.query_ids = {1};
    rel.gallery_ids = {0, 1, 0};
    EXPECT_DOUBLE_EQ(compute_map(d, rel), 0.5);
}

TEST(Metrics, SameCameraSameIdentityIsExcluded) {
    const auto d = matrix(1, 3, {0.0, 0.5, 0.9});
    Relevance rel;
    rel.query_ids = {3};
    rel.gallery_ids = {3, 0, 3};
    rel.query_cams = {1};
    rel.gallery_cams = {1, 1, 2};
    EXPECT_EQ(ranking(d, rel, 0), (std::vector<std::size_t>{1, 2}));
    EXPECT_DOUBLE_EQ(compute_map(d, rel), 0.5);
}

TEST(Metrics, OwnNameIsExcluded) {
    const auto d = matrix(1, 3, {0.0, 0.5, 0.9});
    Relevance rel;
    rel.query_ids = {3};
    rel.gallery_ids = {3, 0, 3};
    rel.query_names = {"a"};
    rel.gallery_names = {"a", "b", "c"};
    EXPECT_EQ(ranking(d, rel, 0), (std::vector<std::size_t>{1, 2}));
}

TEST(Metrics, QueriesWithoutMatchesAreDropped) {
    const auto d = matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
    Relevance rel;
    rel.query_ids = {0, 9};
    rel.gallery_ids = {0, 1};
    const auto r = score(d, rel);
    EXPECT_EQ(r.valid_queries, 1u);
    EXPECT_EQ(r.dropped_queries, 1u);
    EXPECT_DOUBLE_EQ(r.mAP, 1.0);
}

TEST(Metrics, AllQueriesDropped) {
    const auto d = matrix(1, 1, {0.1});
    Relevance rel;
    rel.query_ids = {0};
    rel.gallery_ids = {1};
    const auto r = score(d, rel);
    EXPECT_EQ(r.valid_queries, 0u);
    EXPECT_EQ(r.dropped_queries, 1u);
    EXPECT_EQ(r.mAP, 0.0);
}

TEST(Metrics, MismatchedRelevanceRejected) {
    const auto d = matrix(1, 2, {0.1, 0.2});
    Relevance rel;
    rel.query_ids = {0};
    rel.gallery_ids = {1};
    EXPECT_THROW(compute_map(d, rel), ShapeError);
}

TEST(Metrics, MatchesCountingOracle) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t nq = 1 + rng() % 5, ng = 2 + rng() % 10;
        DistanceMatrix d{nq, ng, std::vector<double>(nq * ng)};
        for (auto& v : d.values) v = static_cast<double>(rng() % 4) / 3.0;
        Relevance rel;
        for (std::size_t q = 0; q < nq; ++q) rel.query_ids.push_back(static_cast<int>(rng() % 3));
        for (std::size_t g = 0; g < ng; ++g) rel.gallery_ids.push_back(static_cast<int>(rng() % 3));
        std::vector<std::vector<double>> dist(nq);
        for (std::size_t q = 0; q < nq; ++q) dist[q].assign(d.values.begin() + q * ng, d.values.begin() + (q + 1) * ng);
        const auto want = pman::oracle::retrieval_by_counting(dist, rel.query_ids, rel.gallery_ids, {}, {}, {1, 5});
        if (want.valid == 0) continue;
        ASSERT_EQ(compute_map(d, rel), want.mAP) << trial;
        ASSERT_EQ(compute_cmc(d, rel, {1, 5}), want.cmc) << trial;
    }
}

TEST(Report, CsvLayout) {
    EvalReport r{0.5, 0.75, 1.0, 8, 2};
    EXPECT_EQ(r.to_csv(),
              "metric,value\nmAP,0.500000\nCMC@1,0.750000\nCMC@5,1.000000\nvalid_queries,8\ndropped_queries,2\n");
    const auto p = std::filesystem::temp_directory_path() / "pman_report.csv";
    r.write_csv(p);
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), r.to_csv());
    std::filesystem::remove(p);
}

namespace {

pmnet::FeatureBundle bundle(std::vector<float> g, std::vector<float> s, std::vector<float> t, std::size_t n) {
    pmnet::FeatureBundle b;
    b.f_g = rows(n, 2, std::move(g));
    b.f_s = rows(n, 2, std::move(s));
    if (!t.empty()) b.f_t = rows(n, 2, std::move(t));
    return b;
}

}  // namespace

TEST(Evaluate, TeacherDistancesNeedBothSides) {
    const auto q = bundle({1, 0}, {1, 0}, {0, 1}, 1);
    const auto g = bundle({1, 0, 0, 1}, {1, 0, 0, 1}, {1, 0, 0, 1}, 2);
    const auto with = bundle_distances(q, g, {1, 1, 1});
    EXPECT_NEAR(with.at(0, 0), 0 + 0 + 1, 1e-9);
    EXPECT_NEAR(with.at(0, 1), 1 + 1 + 0, 1e-9);
    const auto qs = bundle({1, 0}, {1, 0}, {}, 1);
    const auto without = bundle_distances(qs, g, {1, 1, 1});
    EXPECT_NEAR(without.at(0, 0), 0.0, 1e-9);
    EXPECT_NEAR(without.at(0, 1), 2.0, 1e-9);
}

TEST(Evaluate, VeriProtocol) {
    const auto q = bundle({1, 0, 0, 1}, {1, 0, 0, 1}, {}, 2);
    const auto g = bundle({0.9f, 0.1f, 0.1f, 0.9f, 1, 1}, {1, 0, 0, 1, 1, 1}, {}, 3);
    Relevance rel;
    rel.query_ids = {0, 1};
    rel.gallery_ids = {0, 1, 2};
    const auto r = evaluate(q, g, rel, {1, 1, 0});
    EXPECT_DOUBLE_EQ(r.mAP, 1.0);
    EXPECT_DOUBLE_EQ(r.cmc1, 1.0);
}

TEST(Evaluate, VehicleIdProtocolIsDeterministic) {
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n(0.0f, 0.05f);
    std::vector<float> g, s;
    std::vector<int> ids;
    for (int id = 0; id < 5; ++id)
        for (int j = 0; j < 4; ++j) {
            const float a = static_cast<float>(id) * 0.6f;
            g.insert(g.end(), {std::cos(a) + n(rng), std::sin(a) + n(rng)});
            s.insert(s.end(), {std::cos(a) + n(rng), std::sin(a) + n(rng)});
            ids.push_back(id);
        }
    const auto b = bundle(g, s, {}, 20);
    const auto r1 = evaluate_vehicleid(b, ids, {1, 1, 0}, 5, 3);
    const auto r2 = evaluate_vehicleid(b, ids, {1, 1, 0}, 5, 3);
    EXPECT_EQ(r1.to_csv(), r2.to_csv());
    EXPECT_EQ(r1.valid_queries, 15u);
    EXPECT_GT(r1.mAP, 0.9);
    EXPECT_THROW(evaluate_vehicleid(b, ids, {1, 1, 0}, 0, 3), ValidationError);
}

TEST(Evaluate, SelectRows) {
    const auto b = bundle({1, 2, 3, 4, 5, 6}, {6, 5, 4, 3, 2, 1}, {}, 3);
    const auto s = select_rows(b, {2, 0});
    EXPECT_EQ(s.f_g.values(), (std::vector<float>{5, 6, 1, 2}));
    EXPECT_EQ(s.f_s.values(), (std::vector<float>{2, 1, 6, 5}));
    EXPECT_THROW(select_rows(b, {3}), ShapeError);
}
