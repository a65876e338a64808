#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pman/ad/executor.hpp"
#include "pman/ad/grad_check.hpp"
#include "pman/error.hpp"
#include "test_util.hpp"

using namespace pman::ad;
using pman::testing::random_tensor;

namespace {

template <typename T>
Tensor<T> run_single(Graph& g, NodeId y, const std::map<std::string, Tensor<T>>& inputs,
                     ParameterStore<T>& store, Mode mode = Mode::Eval) {
    g.mark_output("y", y);
    Executor<T> ex(g, store, mode);
    return ex.forward(inputs).at("y");
}

}  // namespace

TEST(Forward, SoftmaxOfZerosIsUniform) {
    Graph g;
    ParameterStore<float> store;
    auto y = run_single<float>(g, g.softmax(g.input("x"), 0), {{"x", Tensor<float>({3})}}, store);
    for (float v : y.values()) EXPECT_FLOAT_EQ(v, 1.0f / 3.0f);
}

TEST(Forward, GlobalMaxPoolOfSinglePixelIsIdentity) {
    Graph g;
    ParameterStore<float> store;
    auto y = run_single<float>(g, g.global_max_pool(g.input("x")),
                               {{"x", Tensor<float>({1, 1, 1, 1}, -2.5f)}}, store);
    ASSERT_EQ(y.numel(), 1u);
    EXPECT_EQ(y[0], -2.5f);
}

TEST(Forward, ConvOfOnesSumsWindow) {
    Graph g;
    ParameterStore<float> store;
    store.add("w", Tensor<float>({1, 1, 3, 3}, 1.0f));
    auto y = run_single<float>(g, g.conv2d(g.input("x"), g.param("w"), std::nullopt, {}),
                               {{"x", Tensor<float>({1, 1, 5, 5}, 1.0f)}}, store);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    for (float v : y.values()) EXPECT_EQ(v, 9.0f);
}

TEST(Forward, DilatedPaddedConvMatchesDirectSum) {
    std::mt19937_64 rng(3);
    const auto x = random_tensor<double>({1, 2, 6, 7}, rng);
    const auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    Graph g;
    ParameterStore<double> store;
    store.add("w", w);
    ConvAttrs at;
    at.stride = 2;
    at.pad = 2;
    at.dilation = 2;
    auto y = run_single<double>(g, g.conv2d(g.input("x"), g.param("w"), std::nullopt, at),
                                {{"x", x}}, store);
    const long H = 6, W = 7, Ho = (H + 4 - 5) / 2 + 1, Wo = (W + 4 - 5) / 2 + 1;
    ASSERT_EQ(y.shape(), (Shape{1, 3, std::size_t(Ho), std::size_t(Wo)}));
    for (long co = 0; co < 3; ++co)
        for (long oy = 0; oy < Ho; ++oy)
            for (long ox = 0; ox < Wo; ++ox) {
                double s = 0;
                for (long ci = 0; ci < 2; ++ci)
                    for (long ky = 0; ky < 3; ++ky)
                        for (long kx = 0; kx < 3; ++kx) {
                            const long iy = oy * 2 - 2 + ky * 2, ix = ox * 2 - 2 + kx * 2;
                            if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                            s += x[(ci * H + iy) * W + ix] * w[((co * 2 + ci) * 3 + ky) * 3 + kx];
                        }
                EXPECT_NEAR(y[(co * Ho + oy) * Wo + ox], s, 1e-12);
            }
}

TEST(Forward, TransposedConvDoublesResolution) {
    Graph g;
    ParameterStore<float> store;
    store.add("w", Tensor<float>({2, 3, 4, 4}, 0.1f));
    ConvAttrs at;
    at.stride = 2;
    at.pad = 1;
    auto y = run_single<float>(g, g.conv_transpose2d(g.input("x"), g.param("w"), std::nullopt, at),
                               {{"x", Tensor<float>({1, 2, 5, 5}, 1.0f)}}, store);
    EXPECT_EQ(y.shape(), (Shape{1, 3, 10, 10}));
}

TEST(Forward, SoftmaxSumsToOneAndIsPositive) {
    std::mt19937_64 rng(5);
    Graph g;
    ParameterStore<float> store;
    auto x = random_tensor<float>({3, 4, 5}, rng, -30, 30);
    auto y = run_single<float>(g, g.softmax(g.input("x"), 1), {{"x", x}}, store);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t c = 0; c < 5; ++c) {
            double s = 0;
            for (std::size_t b = 0; b < 4; ++b) {
                const float v = y[(a * 4 + b) * 5 + c];
                EXPECT_GT(v, 0.0f);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
}

TEST(Forward, SameSizeResizeIsBitExact) {
    std::mt19937_64 rng(9);
    Graph g;
    ParameterStore<float> store;
    auto x = random_tensor<float>({2, 3, 7, 5}, rng);
    auto y = run_single<float>(g, g.resize(g.input("x"), 7, 5), {{"x", x}}, store);
    EXPECT_TRUE(y == x);
}

TEST(Forward, EvalBatchNormWithFreshStatsIsAffine) {
    std::mt19937_64 rng(13);
    Graph g;
    ParameterStore<float> store;
    store.add("gamma", Tensor<float>({3}, 1.0f));
    store.add("beta", Tensor<float>({3}, 0.0f));
    store.add_buffer("bn.running_mean", Tensor<float>({3}, 0.0f));
    store.add_buffer("bn.running_var", Tensor<float>({3}, 1.0f));
    const NodeId y = g.batch_norm(g.input("x"), g.param("gamma"), g.param("beta"), "bn");
    g.mark_output("y", y);
    Executor<float> ex(g, store, Mode::Eval);
    auto x = random_tensor<float>({2, 3, 4, 4}, rng);
    auto y1 = ex.forward({{"x", x}}).at("y");
    auto y2 = ex.forward({{"x", x}}).at("y");
    EXPECT_TRUE(y1 == y2);
    const float k = 1.0f / std::sqrt(1.0f + 1e-5f);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y1[i], x[i] * k, 1e-6);
}

TEST(Forward, IdenticalInputsGiveBitIdenticalOutputs) {
    std::mt19937_64 rng(17);
    ParameterStore<float> store;
    store.add("w", random_tensor<float>({4, 3, 3, 3}, rng));
    Graph g;
    const NodeId y = g.softmax(
        g.relu(g.conv2d(g.input("x"), g.param("w"), std::nullopt, ConvAttrs{1, 1, 1, 0})), 1);
    g.mark_output("y", y);
    auto x = random_tensor<float>({2, 3, 8, 8}, rng);
    Executor<float> a(g, store, Mode::Eval), b(g, store, Mode::Eval);
    EXPECT_TRUE(a.forward({{"x", x}}).at("y") == b.forward({{"x", x}}).at("y"));
}

TEST(Forward, ShapeMismatchNamesOp) {
    Graph g;
    ParameterStore<float> store;
    g.mark_output("y", g.add(g.input("a"), g.input("b")));
    Executor<float> ex(g, store, Mode::Eval);
    try {
        ex.forward({{"a", Tensor<float>({2, 3})}, {"b", Tensor<float>({3, 2})}});
        FAIL() << "expected ShapeError";
    } catch (const pman::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("add"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
    }
}

TEST(Forward, UnboundInputIsRejected) {
    Graph g;
    ParameterStore<float> store;
    g.mark_output("y", g.relu(g.input("x")));
    Executor<float> ex(g, store, Mode::Eval);
    EXPECT_THROW(ex.forward({}), pman::ValidationError);
}

TEST(Forward, NonFiniteValueNamesNode) {
    Graph g;
    ParameterStore<float> store;
    g.set_scope("head");
    g.mark_output("y", g.scale(g.input("x"), 1e30));
    Executor<float> ex(g, store, Mode::Eval);
    try {
        ex.forward({{"x", Tensor<float>({2}, 1e30f)}});
        FAIL() << "expected NonFiniteError";
    } catch (const pman::NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("head/scale"), std::string::npos) << e.what();
    }
}

TEST(Backward, SigmoidSlopeAtZeroIsQuarter) {
    Graph g;
    ParameterStore<double> store;
    g.mark_output("y", g.sum(g.sigmoid(g.input("x"))));
    Executor<double> ex(g, store, Mode::Train);
    ex.set_input_requires_grad("x");
    ex.forward({{"x", Tensor<double>({5})}});
    ex.backward("y");
    const auto gx = ex.input_grad("x");
    for (double v : gx.values()) EXPECT_EQ(v, 0.25);
}

TEST(Backward, SoftmaxMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    Graph g;
    ParameterStore<double> store;
    std::map<std::string, Tensor<double>> inputs{{"x", random_tensor<double>({4}, rng)}};
    pman::testing::scalarize(g, g.softmax(g.input("x"), 0), store, inputs, rng);
    GradCheckOptions opt;
    opt.step = 1e-3;
    opt.inputs = {"x"};
    const auto rep = grad_check(g, store, inputs, "loss", opt);
    EXPECT_TRUE(rep.pass) << rep.summary();
}

TEST(Backward, UnusedParameterGradientIsZero) {
    std::mt19937_64 rng(23);
    ParameterStore<double> store;
    store.add("used", random_tensor<double>({3}, rng));
    store.add("unused", random_tensor<double>({4}, rng));
    Graph g;
    g.param("unused");
    g.mark_output("y", g.sum(g.mul(g.input("x"), g.param("used"))));
    Executor<double> ex(g, store, Mode::Train);
    ex.forward({{"x", random_tensor<double>({3}, rng)}});
    ex.backward("y");
    const auto gu = ex.param_grad("unused");
    ASSERT_EQ(gu.numel(), 4u);
    for (double v : gu.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, BeforeForwardIsAnError) {
    Graph g;
    ParameterStore<double> store;
    g.mark_output("y", g.sum(g.input("x")));
    Executor<double> ex(g, store, Mode::Train);
    EXPECT_THROW(ex.backward("y"), pman::InvariantError);
}

TEST(Backward, MaxPoolRoutesGradientToArgmax) {
    Graph g;
    ParameterStore<double> store;
    g.mark_output("y", g.sum(g.global_max_pool(g.input("x"))));
    Executor<double> ex(g, store, Mode::Train);
    ex.set_input_requires_grad("x");
    Tensor<double> x({1, 1, 2, 3}, std::vector<double>{0.1, 0.5, -0.2, 0.9, 0.3, 0.0});
    ex.forward({{"x", x}});
    ex.backward("y");
    const auto gx = ex.input_grad("x");
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(gx[i], i == 3 ? 1.0 : 0.0);
}

TEST(Backward, BatchNormTrainUpdatesRunningStats) {
    ParameterStore<double> store;
    store.add("gamma", Tensor<double>({2}, 1.0));
    store.add("beta", Tensor<double>({2}, 0.0));
    store.add_buffer("bn.running_mean", Tensor<double>({2}, 0.0));
    store.add_buffer("bn.running_var", Tensor<double>({2}, 1.0));
    Graph g;
    g.mark_output("y", g.batch_norm(g.input("x"), g.param("gamma"), g.param("beta"), "bn"));
    Executor<double> ex(g, store, Mode::Train);
    ex.forward({{"x", Tensor<double>({2, 2, 1, 1}, std::vector<double>{1, 2, 3, 6})}});
    EXPECT_NEAR(store.buffer("bn.running_mean")[0], 0.2, 1e-12);
    EXPECT_NEAR(store.buffer("bn.running_mean")[1], 0.4, 1e-12);
    // unbiased variance of {1,3} is 2, of {2,6} is 8
    EXPECT_NEAR(store.buffer("bn.running_var")[0], 0.9 + 0.2, 1e-12);
    EXPECT_NEAR(store.buffer("bn.running_var")[1], 0.9 + 0.8, 1e-12);
}

TEST(Backward, SharedParameterAccumulates) {
    ParameterStore<double> store;
    store.add("w", Tensor<double>({1}, 3.0));
    Graph g;
    const NodeId w1 = g.param("w");
    const NodeId w2 = g.param("w");
    EXPECT_EQ(w1, w2);
    g.mark_output("y", g.sum(g.mul(g.mul(g.input("x"), w1), w2)));
    Executor<double> ex(g, store, Mode::Train);
    ex.forward({{"x", Tensor<double>({1}, 2.0)}});
    ex.backward("y");
    EXPECT_DOUBLE_EQ(ex.param_grad("w")[0], 12.0);
}
