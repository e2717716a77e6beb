#include <gtest/gtest.h>

#include <random>

#include "hfw/autodiff.hpp"
#include "hfw/gradcheck.hpp"

using namespace hfw;
using ad::NodeId;
using ad::Tape;

namespace {

constexpr double kTol = 1e-5;

Tensor<double> rnd(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_uniform<double>(s, rng);
}

// Reduces any node to a scalar against a fixed random target so every output
// element carries a distinct weight.
NodeId to_scalar(Tape<double>& t, NodeId y) {
    return t.mse(y, t.constant(rnd(t.value(y).shape(), 777)));
}

void expect_grad_ok(std::vector<Tensor<double>> params, const LossBuilder& build) {
    const auto r = grad_check(std::move(params), build);
    EXPECT_LE(r.max_rel_error, kTol);
}

}  // namespace

TEST(AutodiffFd, Conv2dZeroAndReflect) {
    for (auto mode : {PadMode::zero, PadMode::reflect})
        for (int stride : {1, 2})
            expect_grad_ok({rnd({2, 2, 5, 6}, 1), rnd({3, 2, 3, 3}, 2), rnd({1, 3, 1, 1}, 3)},
                           [&](Tape<double>& t, const std::vector<NodeId>& p) {
                               return to_scalar(t, t.conv2d(p[0], p[1], p[2], stride, 1, mode));
                           });
}

TEST(AutodiffFd, Conv2dPointwise) {
    expect_grad_ok({rnd({1, 4, 3, 3}, 4), rnd({2, 4, 1, 1}, 5), rnd({1, 2, 1, 1}, 6)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) {
                       return to_scalar(t, t.conv2d(p[0], p[1], p[2], 1, 0, PadMode::zero));
                   });
}

TEST(AutodiffFd, Relu) {
    expect_grad_ok({rnd({1, 2, 4, 4}, 7)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.relu(p[0])); });
}

TEST(AutodiffFd, AvgPoolAndUpsample) {
    expect_grad_ok({rnd({1, 2, 4, 6}, 8)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.avg_pool(p[0])); });
    expect_grad_ok({rnd({1, 2, 3, 2}, 9)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.upsample(p[0])); });
}

TEST(AutodiffFd, MaxPoolAndUnpool) {
    expect_grad_ok({rnd({1, 2, 4, 4}, 10)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.max_pool(p[0])); });
    const auto [_, idx] = max_pool_2x2_with_indices(rnd({1, 2, 4, 4}, 11));
    expect_grad_ok({rnd({1, 2, 2, 2}, 12)}, [idx = idx](Tape<double>& t, const std::vector<NodeId>& p) {
        return to_scalar(t, t.max_unpool(p[0], idx));
    });
}

TEST(AutodiffFd, DepthwiseHaarPair) {
    const std::vector<Kernel2x2<double>> ks{{0.5, 0.5, 0.5, 0.5}, {-0.5, 0.5, -0.5, 0.5}};
    expect_grad_ok({rnd({1, 2, 4, 4}, 13)},
                   [&](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.dw_conv2(p[0], ks)); });
    expect_grad_ok({rnd({1, 2, 2, 3}, 14)}, [&](Tape<double>& t, const std::vector<NodeId>& p) {
        return to_scalar(t, t.dw_deconv2(p[0], ks));
    });
}

TEST(AutodiffFd, LincombConcatSlice) {
    expect_grad_ok({rnd({1, 2, 3, 3}, 15), rnd({1, 2, 3, 3}, 16), rnd({1, 1, 3, 3}, 17)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) {
                       const auto a = t.lincomb({p[0], p[1]}, {0.3, -1.7});
                       const auto c = t.concat({a, p[2], p[0]});
                       return to_scalar(t, t.slice(c, 1, 3));
                   });
}

TEST(AutodiffFd, PadAndCrop) {
    const PadRecord pad{1, 1};
    expect_grad_ok({rnd({1, 2, 3, 5}, 18)},
                   [&](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.pad_even(p[0], pad)); });
    expect_grad_ok({rnd({1, 2, 4, 6}, 19)},
                   [&](Tape<double>& t, const std::vector<NodeId>& p) { return to_scalar(t, t.crop(p[0], pad)); });
}

TEST(AutodiffFd, MseBothSides) {
    expect_grad_ok({rnd({2, 1, 3, 3}, 20), rnd({2, 1, 3, 3}, 21)},
                   [](Tape<double>& t, const std::vector<NodeId>& p) { return t.mse(p[0], p[1]); });
}

TEST(AutodiffFd, ComposedWaveletBlock) {
    // conv -> relu -> LL/LH/HL/HH pool -> upsample-free unpool of LL plus detail bands -> conv
    const std::vector<Kernel2x2<double>> ll{{0.5, 0.5, 0.5, 0.5}};
    const std::vector<Kernel2x2<double>> lh{{-0.5, 0.5, -0.5, 0.5}};
    expect_grad_ok({rnd({1, 2, 5, 5}, 22), rnd({4, 2, 3, 3}, 23), rnd({1, 4, 1, 1}, 24), rnd({2, 4, 3, 3}, 25),
                    rnd({1, 2, 1, 1}, 26)},
                   [&](Tape<double>& t, const std::vector<NodeId>& p) {
                       auto x = t.pad_even(p[0], PadRecord{1, 1});
                       auto h = t.relu(t.conv2d(x, p[1], p[2], 1, 1, PadMode::reflect));
                       auto a = t.dw_conv2(h, ll), b = t.dw_conv2(h, lh);
                       auto u = t.add(t.dw_deconv2(a, ll), t.dw_deconv2(b, lh));
                       auto y = t.conv2d(u, p[3], p[4], 1, 1, PadMode::reflect);
                       return to_scalar(t, t.crop(y, PadRecord{1, 1}));
                   });
}

TEST(Autodiff, FrozenLeafPassesGradientThrough) {
    Tape<double> t;
    const auto x = t.trainable(rnd({1, 2, 4, 4}, 30));
    const auto w = t.frozen(rnd({2, 2, 3, 3}, 31));
    const auto b = t.frozen(Tensor<double>(Shape{1, 2, 1, 1}));
    const auto loss = to_scalar(t, t.conv2d(x, w, b, 1, 1, PadMode::zero));
    const auto g = t.backward(loss);
    EXPECT_EQ(g.size(), 1u);
    ASSERT_TRUE(g.count(x.v));
    EXPECT_GT(sum_squares(g.at(x.v)), 0.0);
    EXPECT_FALSE(g.count(w.v));
}

TEST(Autodiff, ConstantsGetNoGradient) {
    Tape<double> t;
    const auto c = t.constant(rnd({1, 1, 2, 2}, 32));
    const auto p = t.trainable(rnd({1, 1, 2, 2}, 33));
    const auto g = t.backward(t.mse(c, p));
    EXPECT_EQ(g.size(), 1u);
    EXPECT_TRUE(g.count(p.v));
}

TEST(Autodiff, NonScalarLossThrows) {
    Tape<double> t;
    const auto p = t.trainable(rnd({1, 1, 2, 2}, 34));
    EXPECT_THROW(t.backward(t.relu(p)), std::invalid_argument);
}

TEST(Autodiff, ReplayReproducesValues) {
    Tape<double> t;
    const auto x = t.trainable(rnd({1, 2, 4, 4}, 35));
    const auto w = t.frozen(rnd({2, 2, 3, 3}, 36));
    const auto b = t.frozen(Tensor<double>(Shape{1, 2, 1, 1}));
    const auto y = t.relu(t.conv2d(x, w, b, 1, 1, PadMode::reflect));
    const auto m = t.max_pool(y);
    t.mse(t.max_unpool(m, t.indices(m)), y);
    EXPECT_TRUE(t.replay_matches());
}

TEST(Autodiff, ShapeMismatchIsReported) {
    Tape<double> t;
    const auto a = t.constant(Tensor<double>(Shape{1, 1, 2, 2}));
    const auto b = t.constant(Tensor<double>(Shape{1, 1, 2, 3}));
    EXPECT_THROW(t.mse(a, b), ShapeError);
    EXPECT_THROW(t.add(a, b), ShapeError);
    EXPECT_THROW(t.max_pool(b), ShapeError);
}
