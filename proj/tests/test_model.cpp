#include <gtest/gtest.h>

#include <random>

#include "hfw/model.hpp"

using namespace hfw;

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k = 3) { return in * out * k * k + out; }

const SkipVariant kAllSkips[] = {SkipVariant::none, SkipVariant::max_indices, SkipVariant::wavelet_concat,
                                 SkipVariant::hf_residual};

}  // namespace

TEST(ParamCount, TinyMatchesHandCount) {
    const std::size_t enc = conv_params(3, 8) + conv_params(8, 8) + conv_params(8, 16) + conv_params(16, 16) +
                            conv_params(16, 32) + conv_params(32, 32) + conv_params(32, 64);
    const std::size_t dec = conv_params(8, 3) + conv_params(16, 8) + conv_params(8, 8) + conv_params(32, 16) +
                            conv_params(16, 16) + conv_params(64, 32) + conv_params(32, 32);
    const auto pc = count_parameters(ModelConfig::tiny());
    EXPECT_EQ(pc.total, enc + dec);
    EXPECT_EQ(pc.total, 73299u);
    EXPECT_EQ(pc.mainstream_layers, 14u + 6u);
}

TEST(ParamCount, Vgg19WithinBand) {
    const auto pc = count_parameters(ModelConfig::vgg19());
    EXPECT_GE(pc.total, 6'900'000u);
    EXPECT_LE(pc.total, 7'100'000u);
    EXPECT_EQ(pc.total, 7'010'947u);
    EXPECT_EQ(pc.mainstream_layers, 24u);
}

TEST(ParamCount, Vgg19DepthThreeWithinBand) {
    const auto pc = count_parameters(ModelConfig::vgg19(3));
    EXPECT_GE(pc.total, 1'100'000u);
    EXPECT_LE(pc.total, 1'400'000u);
    EXPECT_EQ(pc.total, 1'110'403u);
}

TEST(ModelConfig, RejectsBadDepth) {
    auto c = ModelConfig::tiny();
    c.widths = {8, 16};
    c.pre_pool_convs = {0, 1};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(ModelConfig::tiny(5), std::invalid_argument);
}

TEST(Symmetry, EveryEncoderConvHasMirroredDecoderConv) {
    for (auto skip : kAllSkips) {
        auto cfg = ModelConfig::vgg19();
        cfg.skip = skip;
        for (std::size_t n = 1; n <= cfg.depth(); ++n) {
            const auto enc = encoder_convs(cfg, n);
            auto dec = decoder_convs(cfg, n);
            ASSERT_EQ(enc.size(), dec.size());
            std::reverse(dec.begin(), dec.end());
            for (std::size_t i = 0; i < enc.size(); ++i) {
                // the conv right after the merge sees the widened concat
                const std::size_t factor = (n >= 2 && i + 2 == enc.size()) ? merge_channel_factor(skip) : 1;
                EXPECT_EQ(dec[i].in_c, enc[i].out_c * factor) << n << " " << i;
                EXPECT_EQ(dec[i].out_c, enc[i].in_c);
            }
        }
    }
}

TEST(Encode, TinyBottleneckShape) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 1);
    std::mt19937_64 rng(1);
    const auto img = random_uniform<double>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
    const auto e = encode(img, cfg, w);
    EXPECT_EQ(e.bottleneck.shape(), (Shape{1, 64, 1, 1}));
    ASSERT_EQ(e.taps.features.size(), 4u);
    for (std::size_t n = 1; n <= 4; ++n) EXPECT_EQ(e.taps.features[n - 1].c(), cfg.widths[n - 1]);
}

TEST(Encode, Vgg19TapWidths) {
    const auto cfg = ModelConfig::vgg19();
    const auto w = init_weights<float>(cfg, 1);
    std::mt19937_64 rng(2);
    const auto e = encode(random_uniform<float>(Shape{1, 3, 32, 32}, rng, 0.f, 1.f), cfg, w);
    const std::size_t want[] = {64, 128, 256, 512};
    for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(e.taps.features[n].c(), want[n]);
    EXPECT_EQ(e.bottleneck.h(), 4u);
}

TEST(Encode, ReluTapsAreNonNegative) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 3);
    std::mt19937_64 rng(3);
    const auto e = encode(random_uniform<double>(Shape{1, 3, 12, 12}, rng, 0.0, 1.0), cfg, w);
    for (const auto& f : e.taps.features)
        for (double v : f.data()) EXPECT_GE(v, 0.0);
}

TEST(Encode, OddSizesRoundTripShape) {
    for (auto skip : kAllSkips) {
        auto cfg = ModelConfig::tiny();
        cfg.skip = skip;
        const auto w = init_weights<double>(cfg, 4);
        std::mt19937_64 rng(4);
        const auto img = random_uniform<double>(Shape{1, 3, 13, 7}, rng, 0.0, 1.0);
        EXPECT_EQ(reconstruct(img, cfg, w).shape(), img.shape()) << to_string(skip);
    }
}

TEST(Encode, HfResidualMergeReproducesPrePoolFeature) {
    auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 5);
    std::mt19937_64 rng(5);
    const auto img = random_uniform<double>(Shape{1, 3, 10, 14}, rng, 0.0, 1.0);
    // Pre-pool feature of block 2 computed directly.
    const auto relu1 = relu(conv2d(img, w.encoder[0][0]));
    const auto pre = relu(conv2d(relu1, w.encoder[1][0]));
    const auto e = encode(img, cfg, w);
    const auto& payload = e.skips.at(2, SkipVariant::hf_residual);
    const auto avg = avg_pool_2x2(pad_replicate(pre, payload.pad));
    const auto merged = crop(upsample_nearest_2x(avg) + payload.bands[0], payload.pad);
    EXPECT_LE(max_abs_diff(merged, pre), 1e-12);
}

TEST(Decode, ZeroBottleneckAndSkipsGiveZeroImage) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 6);
    std::mt19937_64 rng(6);
    auto e = encode(random_uniform<double>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0), cfg, w);
    for (auto& [lvl, p] : e.skips.levels)
        for (auto& b : p.bands) b = Tensor<double>(b.shape());
    const auto d = decode(Tensor<double>(e.bottleneck.shape()), e.skips, cfg, w);
    EXPECT_EQ(sum_squares(d.image), 0.0);
}

TEST(Decode, IdentityHookChangesNothing) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 7);
    std::mt19937_64 rng(7);
    const auto e = encode(random_uniform<double>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0), cfg, w);
    const auto plain = decode(e.bottleneck, e.skips, cfg, w);
    int calls = 0;
    const TapHook<Tensor<double>> hook = [&](std::size_t, const Tensor<double>& f) {
        ++calls;
        return f;
    };
    const auto hooked = decode(e.bottleneck, e.skips, cfg, w, hook);
    EXPECT_TRUE(plain.image == hooked.image);
    EXPECT_EQ(calls, 3);
    for (std::size_t n = 1; n <= 3; ++n) EXPECT_EQ(plain.taps.features[n - 1].c(), cfg.widths[n - 1]);
}

TEST(Decode, MissingOrWrongSkipPayloadIsAnError) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 8);
    std::mt19937_64 rng(8);
    auto e = encode(random_uniform<double>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0), cfg, w);
    auto missing = e.skips;
    missing.levels.erase(3);
    EXPECT_THROW(decode(e.bottleneck, missing, cfg, w), std::invalid_argument);
    auto wrong = e.skips;
    wrong.levels[2].variant = SkipVariant::max_indices;
    EXPECT_THROW(decode(e.bottleneck, wrong, cfg, w), std::invalid_argument);
    EXPECT_THROW(decode(Tensor<double>(Shape{1, 32, 2, 2}), e.skips, cfg, w), ShapeError);
}

TEST(Weights, InitIsDeterministicAndChecked) {
    const auto cfg = ModelConfig::tiny();
    const auto a = init_weights<double>(cfg, 9), b = init_weights<double>(cfg, 9), c = init_weights<double>(cfg, 10);
    EXPECT_TRUE(a.encoder[2][1].weight == b.encoder[2][1].weight);
    EXPECT_TRUE(a.decoder[3][0].weight == b.decoder[3][0].weight);
    EXPECT_FALSE(a.encoder[2][1].weight == c.encoder[2][1].weight);
    EXPECT_NO_THROW(check_weights(cfg, a));
    auto bad = a;
    bad.decoder[1].pop_back();
    EXPECT_THROW(check_weights(cfg, bad), std::invalid_argument);
}

TEST(Weights, EncoderConvsArePairedAndOrthogonal) {
    const auto cfg = ModelConfig::tiny();
    const auto w = init_weights<double>(cfg, 11);
    const auto& p = w.encoder[1][1];  // 8 -> 16
    const std::size_t rows = p.out_c() / 2, k = p.k() * p.k();
    for (std::size_t o = 0; o < rows; ++o)
        for (std::size_t i = 0; i < p.weight.numel() / p.out_c(); ++i)
            EXPECT_DOUBLE_EQ(p.weight[o * p.in_c() * k + i], -p.weight[(o + rows) * p.in_c() * k + i]);
}
