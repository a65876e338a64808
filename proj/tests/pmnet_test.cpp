#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pman/ad/executor.hpp"
#include "pman/ad/grad_check.hpp"
#include "pman/error.hpp"
#include "pman/pmnet/blocks.hpp"
#include "pman/pmnet/pmnet.hpp"
#include "test_util.hpp"

using namespace pman;
using pman::testing::random_tensor;
using pman::testing::scalarize;

namespace {

vision::RgbImage random_image(int size, std::mt19937_64& rng) {
    vision::RgbImage img(size, size);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
    return img;
}

pmnet::PmnetConfig tiny_config() {
    pmnet::PmnetConfig c;
    c.input_size = 8;
    c.backbone.stem_width = 3;
    c.backbone.stem_stride = 2;
    c.backbone.widths = {4, 4};
    c.backbone.strides = {1, 1};
    c.num_ids = 2;
    c.K = 2;
    c.global_conv_width = 4;
    c.global_dim = 5;
    c.part_channels = 4;
    c.stream_dim = 3;
    return c;
}

// Random feature-aligned part boxes with a sparse hole pattern inside.
std::vector<panet::PartMaskSet> random_masks(std::size_t n, int K, int size, int feat, std::mt19937_64& rng) {
    const int s = size / feat;
    std::vector<panet::PartMaskSet> out(n);
    std::uniform_int_distribution<int> d(0, feat - 1);
    for (auto& set : out) {
        for (int k = 0; k < K; ++k) {
            const int a = d(rng), b = d(rng), c = d(rng), e = d(rng);
            const vision::BBox fb{std::min(a, b), std::min(c, e), std::max(a, b), std::max(c, e)};
            const auto ib = panet::upscale_box(fb, s);
            auto m = vision::box_mask(size, size, ib);
            for (int y = ib.y0; y <= ib.y1; ++y)
                for (int x = ib.x0; x <= ib.x1; ++x)
                    if ((x * 7 + y * 3) % 5 == 0) m.set(x, y, false);
            set.masks.push_back(m);
            set.feature_boxes.push_back(fb);
            set.image_boxes.push_back(ib);
            set.centroids.push_back({(fb.y0 + fb.y1) / 2.0, (fb.x0 + fb.x1) / 2.0});
        }
    }
    return out;
}

std::map<std::string, ad::Tensor<float>> training_inputs(const pmnet::Pmnet& net, std::size_t B,
                                                         std::mt19937_64& rng) {
    const auto& c = net.config();
    std::vector<vision::RgbImage> imgs;
    ad::Tensor<float> labels({B});
    for (std::size_t i = 0; i < B; ++i) {
        imgs.push_back(random_image(c.input_size, rng));
        labels[i] = static_cast<float>(i % 2);
    }
    std::map<std::string, ad::Tensor<float>> in{{"image", model::images_to_tensor(imgs)}, {"labels", labels}};
    const auto masks = random_masks(B, c.K, c.input_size, c.feature_size(), rng);
    auto tt = pmnet::teacher_tensors(masks, c.K, c.feature_size(), c.feature_size());
    for (int k = 0; k < c.K; ++k) {
        in["box" + std::to_string(k)] = tt.boxes[static_cast<std::size_t>(k)];
        in["wt" + std::to_string(k)] = tt.weights[static_cast<std::size_t>(k)];
    }
    return in;
}

ad::Tensor<double> to_double(const ad::Tensor<float>& t) { return t.cast<double>(); }

// Random offsets in place of the zero-initialised biases and shifts.
void jitter_offsets(ad::ParameterStore<double>& store, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& [name, t] : store.params()) {
        const bool offset = name.ends_with(".b") || name.ends_with(".beta");
        if (!offset) continue;
        for (auto& v : t.values()) v = u(rng);
    }
}

}  // namespace

TEST(Mam, ZeroAttentionIsIdentityBitExact) {
    std::mt19937_64 rng(1);
    ad::Graph g;
    g.mark_output("y", pmnet::mam_combine(g, g.input("f"), g.input("c"), g.input("s")));
    ad::ParameterStore<float> store;
    ad::Executor<float> ex(g, store, ad::Mode::Eval);
    const auto f = random_tensor<float>({2, 6, 4, 5}, rng, -3, 3);
    ad::Tensor<float> zeros_c({2, 6, 1, 1}), rand_s = random_tensor<float>({2, 1, 4, 5}, rng, 0, 1);
    auto y = ex.forward({{"f", f}, {"c", zeros_c}, {"s", rand_s}}).at("y");
    EXPECT_EQ(y.values(), f.values());

    ad::Tensor<float> ones_c({2, 6, 1, 1}), ones_s({2, 1, 4, 5});
    ones_c.fill(1.0f);
    ones_s.fill(1.0f);
    y = ex.forward({{"f", f}, {"c", ones_c}, {"s", ones_s}}).at("y");
    for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(y[i], 2.0f * f[i]);
}

TEST(Mam, AttentionShapesAndRange) {
    ad::Graph g;
    ad::ParameterStore<float> store;
    model::LayerBuilder b(g, store, 3);
    const auto m = pmnet::mam(b, g.input("f"), "mam", 16);
    g.mark_output("c", m.channel);
    g.mark_output("s", m.spatial);
    g.mark_output("y", m.out);
    std::mt19937_64 rng(2);
    ad::Executor<float> ex(g, store, ad::Mode::Eval);
    const auto out = ex.forward({{"f", random_tensor<float>({3, 16, 6, 7}, rng)}});
    EXPECT_EQ(out.at("c").shape(), (ad::Shape{3, 16, 1, 1}));
    EXPECT_EQ(out.at("s").shape(), (ad::Shape{3, 1, 6, 7}));
    EXPECT_EQ(out.at("y").shape(), (ad::Shape{3, 16, 6, 7}));
    for (float v : out.at("s").values()) EXPECT_TRUE(v > 0.0f && v < 1.0f);
    EXPECT_EQ(store.get("mam.mlp1.w").dim(0), 8u);
}

TEST(Mam, GradCheckDouble) {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(300 + seed);
        ad::Graph g;
        ad::ParameterStore<float> fstore;
        model::LayerBuilder b(g, fstore, static_cast<std::uint64_t>(seed));
        const auto m = pmnet::mam(b, g.input("f"), "mam", 8);
        auto store = fstore.cast<double>();
        jitter_offsets(store, rng);
        std::map<std::string, ad::Tensor<double>> in{{"f", random_tensor<double>({2, 8, 5, 5}, rng)}};
        scalarize(g, m.out, store, in, rng);
        ad::GradCheckOptions opt;
        opt.inputs = {"f"};
        const auto rep = ad::grad_check(g, store, in, "loss", opt);
        ASSERT_TRUE(rep.pass) << "seed " << seed << ": " << rep.summary();
    }
}

namespace {

struct TeacherProbe {
    ad::Graph g;
    ad::ParameterStore<double> store;
    TeacherProbe() { g.mark_output("p", pmnet::teacher_input(g, g.input("f"), g.input("w"), g.input("box"))); }
    ad::Tensor<double> run(const ad::Tensor<double>& f, const ad::Tensor<double>& w, const ad::Tensor<double>& box) {
        ad::Executor<double> ex(g, store, ad::Mode::Eval);
        return ex.forward({{"f", f}, {"w", w}, {"box", box}}).at("p");
    }
};

}  // namespace

TEST(TeacherInput, FullMaskIsIdentity) {
    std::mt19937_64 rng(4);
    TeacherProbe t;
    const auto f = random_tensor<double>({2, 3, 5, 6}, rng);
    ad::Tensor<double> w({2, 1, 5, 6});
    w.fill(1.0);
    ad::Tensor<double> box({2, 4}, {0, 0, 4, 5, 0, 0, 4, 5});
    EXPECT_EQ(t.run(f, w, box).values(), f.values());
}

TEST(TeacherInput, TopHalfMaskIgnoresBottomHalf) {
    std::mt19937_64 rng(5);
    TeacherProbe t;
    auto f = random_tensor<double>({1, 3, 6, 6}, rng);
    ad::Tensor<double> w({1, 1, 6, 6});
    for (std::size_t i = 0; i < 18; ++i) w[i] = 1.0;
    ad::Tensor<double> box({1, 4}, {0, 0, 5, 5});
    const auto p = t.run(f, w, box);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 18; i < 36; ++i) f[c * 36 + i] += 10.0 * (1.0 + static_cast<double>(i));
    EXPECT_EQ(t.run(f, w, box).values(), p.values());
    ad::Tensor<double> crop({1, 4}, {0, 0, 2, 5});
    const auto q = t.run(f, w, crop);
    EXPECT_EQ(q.shape(), f.shape());
}

TEST(TeacherInput, DegeneratePartThrows) {
    TeacherProbe t;
    ad::Tensor<double> f({1, 1, 4, 4}), w({1, 1, 4, 4});
    ad::Tensor<double> box({1, 4}, {3, 0, 1, 3});
    try {
        t.run(f, w, box);
        FAIL() << "expected an error";
    } catch (const InvariantError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate part"), std::string::npos);
    }
}

TEST(TeacherInput, GradCheckDouble) {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(400 + seed);
        ad::Graph g;
        ad::ParameterStore<double> store;
        const auto f = g.input("f");
        const auto p = pmnet::teacher_input(g, f, g.input("w"), g.input("box"));
        std::uniform_int_distribution<int> d(0, 5);
        int a = d(rng), b2 = d(rng), c = d(rng), e = d(rng);
        std::map<std::string, ad::Tensor<double>> in{
            {"f", random_tensor<double>({2, 3, 6, 6}, rng)},
            {"w", random_tensor<double>({2, 1, 6, 6}, rng, 0, 1)},
            {"box", ad::Tensor<double>({2, 4}, {double(std::min(a, b2)), double(std::min(c, e)),
                                                double(std::max(a, b2)), double(std::max(c, e)), 0, 1, 5, 4})}};
        scalarize(g, p, store, in, rng);
        ad::GradCheckOptions opt;
        opt.inputs = {"f"};
        const auto rep = ad::grad_check(g, store, in, "loss", opt);
        ASSERT_TRUE(rep.pass) << "seed " << seed << ": " << rep.summary();
    }
}

TEST(MaskMaxPool, SpikeAndArgmaxGradient) {
    ad::Graph g;
    const auto y = pmnet::teacher_pool(g, g.input("m"));
    g.mark_output("y", y);
    g.mark_output("loss", g.sum(y));
    ad::ParameterStore<double> store;
    ad::Executor<double> ex(g, store, ad::Mode::Train);
    ex.set_input_requires_grad("m");
    ad::Tensor<double> m({1, 2, 3, 3});
    m[4] = 2.5;
    m[9 + 7] = -0.5;
    for (std::size_t i = 9; i < 18; ++i)
        if (i != 16) m[i] = -1.0;
    const auto out = ex.forward({{"m", m}});
    EXPECT_EQ(out.at("y")[0], 2.5);
    EXPECT_EQ(out.at("y")[1], -0.5);
    ex.backward("loss");
    const auto gm = ex.input_grad("m");
    for (std::size_t i = 0; i < 18; ++i) EXPECT_EQ(gm[i], (i == 4 || i == 16) ? 1.0 : 0.0);
}

TEST(MaskMaxPool, GradCheckDouble) {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(500 + seed);
        ad::Graph g;
        ad::ParameterStore<double> store;
        std::map<std::string, ad::Tensor<double>> in{{"m", random_tensor<double>({3, 4, 5, 5}, rng)}};
        scalarize(g, pmnet::teacher_pool(g, g.input("m")), store, in, rng);
        ad::GradCheckOptions opt;
        opt.inputs = {"m"};
        const auto rep = ad::grad_check(g, store, in, "loss", opt);
        ASSERT_TRUE(rep.pass) << "seed " << seed << ": " << rep.summary();
    }
}

TEST(StudentPool, ConstantMap) {
    ad::Graph g;
    g.mark_output("y", pmnet::student_pool(g, g.input("m")));
    ad::ParameterStore<float> store;
    ad::Executor<float> ex(g, store, ad::Mode::Eval);
    ad::Tensor<float> m({1, 2, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) m[i] = 1.75f;
    for (std::size_t i = 9; i < 18; ++i) m[i] = -4.0f;
    const auto y = ex.forward({{"m", m}}).at("y");
    EXPECT_EQ(y.shape(), (ad::Shape{1, 2}));
    EXPECT_FLOAT_EQ(y[0], 1.75f);
    EXPECT_FLOAT_EQ(y[1], -4.0f);
}

namespace {

double run_transfer(const ad::Tensor<double>& s, const ad::Tensor<double>& t, bool squared) {
    ad::Graph g;
    g.mark_output("l", g.part_transfer(g.input("s"), g.input("t"), squared));
    ad::ParameterStore<double> store;
    ad::Executor<double> ex(g, store, ad::Mode::Eval);
    return ex.forward({{"s", s}, {"t", t}}).at("l")[0];
}

}  // namespace

TEST(PartTransfer, HandEvaluatedCase) {
    // s[b][c] planes, 2x2 pixels.
    ad::Tensor<double> s({2, 2, 2, 2}, {1, 2, 3, 4, 0, 0, 1, 1, 2, 2, 2, 2, -1, 3, 0, 5});
    ad::Tensor<double> t({2, 2, 2, 2}, {0, 0, 0, 0, 1, 1, 1, 1, 4, 0, 2, 2, 3, -1, 0, 1});
    // Averaging over b then c: s_bar = (1+0+2-1, 2+0+2+3, 3+1+2+0, 4+1+2+5)/4 = (0.5, 1.75, 1.5, 3)
    // t_bar = (0+1+4+3, 0+1+0-1, 0+1+2+0, 0+1+2+1)/4 = (2, 0, 0.75, 1)
    const double abs_ref = (1.5 + 1.75 + 0.75 + 2.0) / 4.0;
    const double sq_ref = (1.5 * 1.5 + 1.75 * 1.75 + 0.75 * 0.75 + 4.0) / 4.0;
    EXPECT_NEAR(run_transfer(s, t, false), abs_ref, 1e-12);
    EXPECT_NEAR(run_transfer(s, t, true), sq_ref, 1e-12);
    EXPECT_NEAR(run_transfer(t, s, false), abs_ref, 1e-12);
    EXPECT_EQ(run_transfer(s, s, false), 0.0);
}

TEST(PartTransfer, ScalarMapsGiveAbsoluteDifference) {
    ad::Tensor<double> s({3, 1, 1, 1}, {1.0, 2.0, 3.0}), t({3, 1, 1, 1}, {0.0, 0.5, 1.0});
    EXPECT_NEAR(run_transfer(s, t, false), 1.5, 1e-12);
}

TEST(PartTransfer, ShapeMismatchThrows) {
    ad::Tensor<double> s({1, 2, 2, 2}), t({1, 2, 2, 3});
    EXPECT_THROW(run_transfer(s, t, false), ShapeError);
}

TEST(Pmnet, DefaultBundleDims) {
    pmnet::PmnetConfig cfg;
    cfg.num_ids = 4;
    pmnet::Pmnet net(cfg, 7);
    std::mt19937_64 rng(7);
    std::vector<vision::RgbImage> imgs{random_image(64, rng), random_image(64, rng)};
    const auto masks = random_masks(2, 3, 64, 8, rng);
    const auto full = net.infer(imgs, masks);
    EXPECT_EQ(full.f_g.shape(), (ad::Shape{2, 256}));
    EXPECT_EQ(full.f_s.shape(), (ad::Shape{2, 384}));
    ASSERT_TRUE(full.f_t.has_value());
    EXPECT_EQ(full.f_t->shape(), (ad::Shape{2, 384}));

    const auto only = net.infer(imgs);
    EXPECT_FALSE(only.f_t.has_value());
    EXPECT_EQ(only.f_g.values(), full.f_g.values());
    EXPECT_EQ(only.f_s.values(), full.f_s.values());
}

TEST(Pmnet, IdenticalImagesGiveIdenticalFeatures) {
    pmnet::Pmnet net(tiny_config(), 1);
    std::mt19937_64 rng(1);
    const auto img = random_image(8, rng);
    std::vector<vision::RgbImage> imgs{img, img};
    const auto fb = net.infer(imgs);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(fb.f_g[i], fb.f_g[5 + i]);
}

TEST(Pmnet, InferErrors) {
    pmnet::Pmnet net(tiny_config(), 1);
    std::mt19937_64 rng(1);
    std::vector<vision::RgbImage> imgs{random_image(8, rng)};
    const auto masks = random_masks(2, 2, 8, 4, rng);
    EXPECT_THROW(net.infer(imgs, masks), ValidationError);
    const auto three = random_masks(1, 3, 8, 4, rng);
    EXPECT_THROW(net.infer(imgs, three), ValidationError);
    std::vector<vision::RgbImage> big{random_image(16, rng)};
    EXPECT_THROW(net.infer(big), ValidationError);

    auto cfg = tiny_config();
    cfg.global_only = true;
    pmnet::Pmnet g(cfg, 1);
    EXPECT_THROW(g.infer(imgs, random_masks(1, 2, 8, 4, rng)), ValidationError);
    EXPECT_EQ(g.infer(imgs).f_s.dim(1), 0u);
}

TEST(Pmnet, StudentAndTeacherShareParameters) {
    pmnet::Pmnet net(tiny_config(), 2);
    std::mt19937_64 rng(2);
    const auto& c = net.config();
    std::vector<vision::RgbImage> imgs{random_image(8, rng), random_image(8, rng)};
    ad::Tensor<float> wt({2, 1, 4, 4}), box({2, 4}, {0, 0, 3, 3, 0, 0, 3, 3});
    wt.fill(1.0f);
    std::map<std::string, ad::Tensor<float>> in{{"image", model::images_to_tensor(imgs)}};
    for (int k = 0; k < c.K; ++k) {
        in["box" + std::to_string(k)] = box;
        in["wt" + std::to_string(k)] = wt;
    }
    auto params = net.params();
    ad::Executor<float> ex(net.graph(), params, ad::Mode::Eval);
    const auto out = ex.forward(in, {"stream0.student_map", "stream0.teacher_map", "stream1.student_map",
                                     "stream1.teacher_map"});
    EXPECT_EQ(out.at("stream0.student_map").values(), out.at("stream0.teacher_map").values());
    EXPECT_EQ(out.at("stream1.student_map").values(), out.at("stream1.teacher_map").values());
    for (const auto& name : net.params().names()) EXPECT_EQ(name.find("teacher.mam"), std::string::npos) << name;
}

TEST(Pmnet, BackboneReceivesGradient) {
    pmnet::Pmnet net(tiny_config(), 3);
    std::mt19937_64 rng(3);
    auto in = training_inputs(net, 4, rng);
    ad::Executor<float> ex(net.graph(), net.params(), ad::Mode::Train);
    ex.forward(in, {"J"});
    ex.backward("J");
    std::size_t nonzero_backbone = 0, backbone = 0;
    for (const auto& [name, grad] : ex.param_grads()) {
        if (name.rfind("backbone.", 0) != 0) continue;
        ++backbone;
        for (float v : grad.values())
            if (v != 0.0f) {
                ++nonzero_backbone;
                break;
            }
    }
    EXPECT_GT(backbone, 0u);
    EXPECT_EQ(nonzero_backbone, backbone);
    EXPECT_NE(ex.param_grad(pmnet::Pmnet::kHulParam)[0], 0.0f);
}

TEST(Pmnet, HulAtUnitVarianceSumsLosses) {
    pmnet::Pmnet net(tiny_config(), 4);
    std::mt19937_64 rng(4);
    auto in = training_inputs(net, 4, rng);
    ad::Executor<float> ex(net.graph(), net.params(), ad::Mode::Train);
    const auto out = ex.forward(in, {"L_G", "L_S", "L_T", "J_ID", "tri", "L_PT", "J"});
    EXPECT_NEAR(out.at("J_ID")[0], out.at("L_G")[0] + out.at("L_S")[0] + out.at("L_T")[0], 1e-5);
    EXPECT_NEAR(out.at("J")[0], out.at("J_ID")[0] + out.at("tri")[0] + out.at("L_PT")[0], 1e-5);
    const auto w = net.task_weights();
    for (double v : w) EXPECT_EQ(v, 1.0);
}

TEST(Pmnet, FixedWeighting) {
    auto cfg = tiny_config();
    cfg.weighting = pmnet::Weighting::Fixed;
    cfg.fixed_weights = {4.0, 1.0, 1.0};
    pmnet::Pmnet net(cfg, 4);
    EXPECT_FALSE(net.params().has(pmnet::Pmnet::kHulParam));
    std::mt19937_64 rng(4);
    auto in = training_inputs(net, 4, rng);
    ad::Executor<float> ex(net.graph(), net.params(), ad::Mode::Train);
    const auto out = ex.forward(in, {"L_G", "L_S", "L_T", "J_ID"});
    EXPECT_NEAR(out.at("J_ID")[0], 4 * out.at("L_G")[0] + out.at("L_S")[0] + out.at("L_T")[0], 1e-4);
}

TEST(Pmnet, GlobalOnlyHasNoParts) {
    auto cfg = tiny_config();
    cfg.global_only = true;
    pmnet::Pmnet net(cfg, 5);
    for (const auto& name : net.params().names()) {
        EXPECT_EQ(name.find("stream"), std::string::npos) << name;
        EXPECT_EQ(name.find("part"), std::string::npos) << name;
    }
    std::mt19937_64 rng(5);
    auto in = training_inputs(net, 4, rng);
    ad::Executor<float> ex(net.graph(), net.params(), ad::Mode::Train);
    const auto out = ex.forward(in, {"L_G", "tri", "J"});
    EXPECT_NEAR(out.at("J")[0], out.at("L_G")[0] + out.at("tri")[0], 1e-5);
}

TEST(Pmnet, CheckpointRoundTrip) {
    auto cfg = tiny_config();
    cfg.squared_transfer = true;
    cfg.margin = 0.5;
    pmnet::Pmnet net(cfg, 6);
    net.params().get(pmnet::Pmnet::kHulParam)[1] = 0.25f;
    const auto back = pmnet::Pmnet::from_tensor_map(net.to_tensor_map());
    EXPECT_TRUE(back.config().squared_transfer);
    EXPECT_EQ(back.config().K, 2);
    EXPECT_DOUBLE_EQ(back.config().margin, 0.5);
    for (const auto& [k, v] : net.params().params()) EXPECT_EQ(back.params().get(k).values(), v.values()) << k;
    EXPECT_NEAR(back.task_weights()[1], std::exp(-0.25), 1e-7);
}

TEST(Pmnet, HeadsGradCheckDouble) {
    for (int seed = 0; seed < 20; ++seed) {
        pmnet::Pmnet net(tiny_config(), static_cast<std::uint64_t>(seed));
        std::mt19937_64 rng(600 + seed);
        const auto fin = training_inputs(net, 4, rng);
        std::map<std::string, ad::Tensor<double>> in;
        for (const auto& [k, v] : fin) in[k] = to_double(v);
        auto store = net.params().cast<double>();
        jitter_offsets(store, rng);
        store.get(pmnet::Pmnet::kHulParam) = random_tensor<double>({3}, rng, -0.5, 0.5);
        ad::GradCheckOptions opt;
        opt.step = 1e-6;
        const auto rep = ad::grad_check(net.graph(), store, in, "J", opt);
        ASSERT_TRUE(rep.pass) << "seed " << seed << ": " << rep.summary();
    }
}
