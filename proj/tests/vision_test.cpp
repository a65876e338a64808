#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "pman/error.hpp"
#include "pman/vision/components.hpp"
#include "pman/vision/gmm.hpp"
#include "pman/vision/grabcut.hpp"
#include "pman/vision/kmeans.hpp"
#include "pman/vision/maxflow.hpp"
#include "pman/vision/png_io.hpp"
#include "scenes.hpp"

using namespace pman::vision;

// ---------------------------------------------------------------- max flow

TEST(MaxFlow, DisconnectedTerminals) {
    FlowNetwork net(4, 0, 3);
    net.add_edge(0, 1, 2.0);
    net.add_edge(2, 3, 7.0);
    const auto cut = max_flow_min_cut(net);
    EXPECT_EQ(cut.flow, 0.0);
    EXPECT_EQ(cut.source_side, (std::vector<char>{1, 1, 0, 0}));
}

TEST(MaxFlow, SingleEdge) {
    FlowNetwork net(2, 0, 1);
    net.add_edge(0, 1, 5.0);
    EXPECT_EQ(max_flow_min_cut(net).flow, 5.0);
}

TEST(MaxFlow, MatchesBruteForceOnRandomNetworks) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 9);
        FlowNetwork net(n, 0, n - 1);
        const int m = static_cast<int>(rng() % 30);
        for (int e = 0; e < m; ++e) {
            net.add_edge(static_cast<int>(rng() % n), static_cast<int>(rng() % n),
                         static_cast<double>(rng() % 20));
        }
        const auto cut = max_flow_min_cut(net);
        const double want = pman::oracle::brute_force_min_cut(net);
        ASSERT_DOUBLE_EQ(cut.flow, want) << "trial " << trial;
        ASSERT_DOUBLE_EQ(cut.cut_capacity(net), want) << "trial " << trial;
        ASSERT_TRUE(cut.source_side[0]);
        ASSERT_FALSE(cut.source_side[static_cast<std::size_t>(n - 1)]);
    }
}

TEST(MaxFlow, RejectsInvalidNetworks) {
    FlowNetwork same(3, 1, 1);
    EXPECT_THROW(max_flow_min_cut(same), pman::ValidationError);
    FlowNetwork neg(2, 0, 1);
    neg.add_edge(0, 1, -1.0);
    EXPECT_THROW(max_flow_min_cut(neg), pman::ValidationError);
}

// ---------------------------------------------------------------- gmm

TEST(Gmm, SingleComponentIsSampleMoments) {
    std::vector<Color> px = {{0.1, 0.2, 0.3}, {0.3, 0.2, 0.1}, {0.2, 0.5, 0.2}, {0.4, 0.1, 0.6}};
    const auto g = gmm_fit(px, 1, 10, 3);
    ASSERT_EQ(g.components.size(), 1u);
    const auto& c = g.components[0];
    EXPECT_NEAR(c.weight, 1.0, 1e-12);
    for (std::size_t k = 0; k < 3; ++k) {
        double m = 0;
        for (const auto& p : px) m += p[k] / 4.0;
        EXPECT_NEAR(c.mean[k], m, 1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (const auto& p : px) s += (p[i] - c.mean[i]) * (p[j] - c.mean[j]) / 4.0;
            EXPECT_NEAR(c.cov[i * 3 + j], s + (i == j ? 1e-4 : 0.0), 1e-12);
        }
}

TEST(Gmm, RecoversTwoTightClusters) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nz(0.0, 0.003);
    const Color a{0.8, 0.1, 0.1}, b{0.1, 0.2, 0.9};
    std::vector<Color> px;
    Color ma{}, mb{};
    for (int i = 0; i < 400; ++i) {
        const Color& base = i % 2 ? a : b;
        Color p{base[0] + nz(rng), base[1] + nz(rng), base[2] + nz(rng)};
        px.push_back(p);
        for (std::size_t k = 0; k < 3; ++k) (i % 2 ? ma : mb)[k] += p[k] / 200.0;
    }
    const auto g = gmm_fit(px, 2, 20, 7);
    ASSERT_EQ(g.components.size(), 2u);
    g.validate();
    for (const auto& want : {ma, mb}) {
        double best = 1e9;
        for (const auto& c : g.components) {
            double d = 0;
            for (std::size_t k = 0; k < 3; ++k) d = std::max(d, std::abs(c.mean[k] - want[k]));
            best = std::min(best, d);
        }
        EXPECT_LT(best, 2.0 / 255.0);
    }
}

TEST(Gmm, DuplicatedDistinctColoursGetOneComponentEach) {
    const std::vector<Color> colors = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
    std::vector<Color> px;
    for (int r = 0; r < 6; ++r) px.insert(px.end(), colors.begin(), colors.end());
    const auto g = gmm_fit(px, 5, 10, 1);
    ASSERT_EQ(g.components.size(), 5u);
    for (const auto& want : colors) {
        int hits = 0;
        for (const auto& c : g.components) hits += c.mean == want;
        EXPECT_EQ(hits, 1);
    }
}

TEST(Gmm, LogLikelihoodNonDecreasingAndDeterministic) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0, 1);
        std::vector<Color> px(300);
        for (auto& p : px) p = {u(rng), u(rng) * u(rng), u(rng) > 0.5 ? 0.9 : 0.1};
        const auto f1 = gmm_fit_trace(px, 5, seed);
        for (std::size_t i = 1; i < f1.log_likelihood.size(); ++i)
            EXPECT_GE(f1.log_likelihood[i], f1.log_likelihood[i - 1]);
        f1.model.validate();
        const auto f2 = gmm_fit_trace(px, 5, seed);
        EXPECT_EQ(f1.log_likelihood, f2.log_likelihood);
    }
}

TEST(Gmm, EmptyInputRejected) {
    EXPECT_THROW(gmm_fit({}, 2, 5, 0), pman::ValidationError);
}

// ---------------------------------------------------------------- grabcut

TEST(GrabCut, RedRectangleOnBlue) {
    RgbImage img(40, 30);
    BinaryMask want(40, 30);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) {
            const bool red = x >= 12 && x < 28 && y >= 9 && y < 21;
            want.set(x, y, red);
            img.at(x, y, 0) = red ? 255 : 0;
            img.at(x, y, 2) = red ? 0 : 255;
        }
    const auto m = grabcut_lite(img, {2, 2, 37, 27}, 5, 0);
    EXPECT_EQ(m, want);
}

TEST(GrabCut, UniformImageKeepsRectangle) {
    RgbImage img(20, 16);
    for (auto& p : img.pixels) p = 128;
    const BBox rect{3, 2, 15, 12};
    const auto r = grabcut_trace(img, rect, 0);
    EXPECT_TRUE(r.kept_initialisation);
    EXPECT_EQ(r.mask, box_mask(20, 16, rect));
}

TEST(GrabCut, EnergyNeverIncreases) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        RgbImage img;
        if (seed % 3 == 0) {
            std::mt19937_64 rng(seed);
            img = RgbImage(24, 20);
            for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
        } else {
            img = pman::testing::separable_scene(seed, 32, 28).image;
        }
        GrabCutOptions opt;
        opt.iters = 5;
        const auto r = grabcut_trace(img, shrunk_bounds(img.width, img.height, 0.05), seed, opt);
        ASSERT_FALSE(r.kept_initialisation);
        ASSERT_EQ(r.steps.size(), 6u);
        EXPECT_LT(r.steps.back().energy, r.steps.front().energy);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& s : r.steps) {
            const double e = pman::oracle::grabcut_energy(img, s.mask, s.foreground, s.background, opt.lambda);
            EXPECT_NEAR(e, s.energy, 1e-7 * std::abs(e));
            EXPECT_LE(e, prev + 1e-9 * std::abs(prev)) << "seed " << seed;
            prev = e;
        }
    }
}

TEST(GrabCut, SeparableScenesMatchColourThreshold) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = pman::testing::separable_scene(100 + seed);
        const auto m = grabcut_lite(s.image, shrunk_bounds(64, 64, 0.05), 5, seed);
        EXPECT_GE(mask_iou(m, s.threshold_oracle), 0.95) << "seed " << seed;
    }
}

TEST(GrabCut, OutsideRectangleIsBackground) {
    const auto s = pman::testing::separable_scene(7);
    const BBox rect{20, 20, 45, 45};
    const auto m = grabcut_lite(s.image, rect, 3, 0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (!rect.contains(x, y)) ASSERT_FALSE(m.at(x, y));
}

TEST(GrabCut, DegenerateRectangleRejected) {
    RgbImage img(10, 10);
    EXPECT_THROW(grabcut_lite(img, {4, 4, 3, 8}, 5, 0), pman::ValidationError);
    EXPECT_THROW(grabcut_lite(img, {0, 0, 10, 9}, 5, 0), pman::ValidationError);
    EXPECT_THROW(grabcut_lite(img, {0, 0, 5, 5}, 0, 0), pman::ValidationError);
}

// ---------------------------------------------------------------- components

TEST(Components, AllTrueMask) {
    const auto c = largest_connected_component(BinaryMask(7, 5, true));
    ASSERT_TRUE(c);
    EXPECT_EQ(c->bbox, (BBox{0, 0, 6, 4}));
    EXPECT_EQ(c->center_x, 3.0);
    EXPECT_EQ(c->center_y, 2.0);
}

TEST(Components, PicksLargerBlob) {
    BinaryMask m(10, 10);
    for (int i = 0; i < 5; ++i) m.set(i, 0, true);
    for (int y = 5; y < 8; ++y)
        for (int x = 5; x < 8; ++x) m.set(x, y, true);
    const auto c = largest_connected_component(m);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->size, 9u);
    EXPECT_EQ(c->bbox, (BBox{5, 5, 7, 7}));
}

TEST(Components, TieGoesToEarliestRasterStart) {
    BinaryMask m(8, 8);
    for (int i = 0; i < 3; ++i) m.set(5 + i, 1, true);
    for (int i = 0; i < 3; ++i) m.set(0, 4 + i, true);
    const auto c = largest_connected_component(m);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->bbox, (BBox{5, 1, 7, 1}));
}

TEST(Components, EmptyMaskSignalsEmpty) { EXPECT_FALSE(largest_connected_component(BinaryMask(4, 4))); }

TEST(Components, DiagonalPixelsAreSeparate) {
    BinaryMask m(3, 3);
    m.set(0, 0, true);
    m.set(1, 1, true);
    EXPECT_EQ(largest_connected_component(m)->size, 1u);
}

TEST(Components, MatchesFloodFillOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 150; ++trial) {
        const int W = 1 + static_cast<int>(rng() % 20), H = 1 + static_cast<int>(rng() % 20);
        const double p = 0.2 + 0.6 * (trial % 7) / 6.0;
        BinaryMask m(W, H);
        std::bernoulli_distribution b(p);
        for (auto& bit : m.bits) bit = b(rng);
        const auto got = largest_connected_component(m);
        const auto want = pman::oracle::flood_fill_largest(m);
        ASSERT_EQ(got.has_value(), !want.empty);
        if (!got) continue;
        ASSERT_EQ(got->size, want.size);
        ASSERT_EQ(got->bbox, (BBox{want.x0, want.y0, want.x1, want.y1}));
        for (std::size_t i = 0; i < m.bits.size(); ++i) ASSERT_EQ(got->mask.bits[i] != 0, want.pixels[i] != 0);
    }
}

// ---------------------------------------------------------------- kmeans

TEST(KMeans, KPointsKClusters) {
    std::vector<std::array<double, 2>> pts = {{0, 0}, {5, 1}, {2, 9}, {7, 7}};
    const auto r = kmeans(pts, 4, 3);
    EXPECT_EQ(r.inertia, 0.0);
    for (const auto& m : r.members) EXPECT_EQ(m.size(), 1u);
}

TEST(KMeans, SeparatedTriplesMatchBruteForce) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::array<double, 2>> pts;
        std::vector<int> truth;
        for (int g = 0; g < 3; ++g) {
            const double cx = 20.0 * g + u(rng), cy = 15.0 * (g % 2) + u(rng);
            for (int i = 0; i < 3; ++i) {
                pts.push_back({cx + u(rng), cy + u(rng)});
                truth.push_back(g);
            }
        }
        std::vector<int> best;
        const double opt = pman::oracle::brute_force_kmeans(pts, 3, &best);
        const auto r = kmeans(pts, 3, static_cast<std::uint64_t>(trial));
        EXPECT_TRUE(pman::oracle::same_partition(r.assignment, truth));
        EXPECT_TRUE(pman::oracle::same_partition(r.assignment, best));
        EXPECT_NEAR(r.inertia, opt, 1e-9);
    }
}

TEST(KMeans, DeterministicAndMonotone) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<std::array<double, 2>> pts(200);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const auto a = kmeans(pts, 5, 42), b = kmeans(pts, 5, 42);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.centroids, b.centroids);
    for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) EXPECT_LE(a.inertia_trace[i], a.inertia_trace[i - 1] + 1e-12);
    // fixpoint: every point is at its nearest centroid
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto d = [&](std::size_t k) {
            const double dx = pts[i][0] - a.centroids[k * 2], dy = pts[i][1] - a.centroids[k * 2 + 1];
            return dx * dx + dy * dy;
        };
        for (std::size_t k = 0; k < 5; ++k) EXPECT_LE(d(static_cast<std::size_t>(a.assignment[i])), d(k));
    }
}

TEST(KMeans, DuplicatePointsNeverLeaveEmptyClusters) {
    std::vector<std::array<double, 2>> pts(6, {1.0, 1.0});
    pts.push_back({4.0, 4.0});
    const auto r = kmeans(pts, 3, 0);
    for (const auto& m : r.members) EXPECT_FALSE(m.empty());
}

TEST(KMeans, TooFewPointsRejected) {
    std::vector<std::array<double, 2>> pts = {{0, 0}, {1, 1}};
    EXPECT_THROW(kmeans(pts, 3, 0), pman::ValidationError);
}

// ---------------------------------------------------------------- binarize

TEST(Binarize, ConstantPositiveIsAllTrue) {
    std::vector<float> m(12, 0.3f);
    EXPECT_EQ(binarize_channel(m, 4, 3, 0.5).count(), 12u);
}

TEST(Binarize, SingleSpike) {
    std::vector<float> m(20, 0.0f);
    m[13] = 2.0f;
    const auto b = binarize_channel(m, 5, 4, 0.5);
    EXPECT_EQ(b.count(), 1u);
    EXPECT_TRUE(b.bits[13]);
}

TEST(Binarize, NonPositiveMapIsEmpty) {
    std::vector<float> zero(6, 0.0f), neg = {-1, -2, -3, -1, -5, -1};
    EXPECT_EQ(binarize_channel(zero, 3, 2, 0.5).count(), 0u);
    EXPECT_EQ(binarize_channel(neg, 3, 2, 0.5).count(), 0u);
}

TEST(Binarize, MatchesElementwiseComparison) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(-0.2f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> m(48);
        for (auto& v : m) v = u(rng);
        const double t = 0.1 + 0.8 * (trial % 9) / 8.0;
        const auto b = binarize_channel(m, 8, 6, t);
        const float mx = *std::max_element(m.begin(), m.end());
        for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(b.bits[i] != 0, m[i] >= t * mx);
    }
}

// ---------------------------------------------------------------- png

TEST(Png, RoundTrips) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto s = pman::testing::separable_scene(3, 17, 11);
    write_png(dir / "pman_rt.png", s.image);
    const auto back = read_png(dir / "pman_rt.png");
    EXPECT_EQ(back.width, 17);
    EXPECT_EQ(back.pixels, s.image.pixels);
    write_mask_png(dir / "pman_rt_mask.png", s.threshold_oracle);
    EXPECT_EQ(read_mask_png(dir / "pman_rt_mask.png"), s.threshold_oracle);
    std::filesystem::remove(dir / "pman_rt.png");
    std::filesystem::remove(dir / "pman_rt_mask.png");
}

TEST(Png, GarbageFileRejected) {
    const auto p = std::filesystem::temp_directory_path() / "pman_garbage.png";
    {
        std::ofstream(p) << "not a png";
    }
    EXPECT_THROW(read_png(p), pman::FormatError);
    std::filesystem::remove(p);
    EXPECT_THROW(read_png(p), pman::ValidationError);
}
