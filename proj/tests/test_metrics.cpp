#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "hfw/metrics.hpp"

using namespace hfw;

namespace {

// Dense per-window accumulation written out with scalar loops.
Eigen::MatrixXd laplacian_oracle(const Tensor<double>& img, double eps) {
    const std::size_t h = img.h(), w = img.w(), P = h * w, C = img.c();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(Eigen::Index(P), Eigen::Index(P));
    for (std::size_t y = 1; y + 1 < h; ++y)
        for (std::size_t x = 1; x + 1 < w; ++x) {
            std::vector<std::size_t> pix;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) pix.push_back(std::size_t(int(y) + dy) * w + std::size_t(int(x) + dx));
            std::vector<double> mu(C, 0);
            for (auto p : pix)
                for (std::size_t c = 0; c < C; ++c) mu[c] += img.plane(0, c)[p] / 9.0;
            Eigen::MatrixXd S(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
            for (std::size_t a = 0; a < C; ++a)
                for (std::size_t b = 0; b < C; ++b) {
                    double s = 0;
                    for (auto p : pix) s += (img.plane(0, a)[p] - mu[a]) * (img.plane(0, b)[p] - mu[b]);
                    S(Eigen::Index(a), Eigen::Index(b)) = s / 9.0 + (a == b ? eps / 9.0 : 0.0);
                }
            const Eigen::MatrixXd Si = S.inverse();
            for (auto i : pix)
                for (auto j : pix) {
                    double q = 0;
                    for (std::size_t a = 0; a < C; ++a)
                        for (std::size_t b = 0; b < C; ++b)
                            q += (img.plane(0, a)[i] - mu[a]) * Si(Eigen::Index(a), Eigen::Index(b)) *
                                 (img.plane(0, b)[j] - mu[b]);
                    L(Eigen::Index(i), Eigen::Index(j)) += (i == j ? 1.0 : 0.0) - (1.0 + q) / 9.0;
                }
        }
    return L;
}

struct Model {
    ModelConfig cfg = ModelConfig::tiny(3);
    BlockWeights<double> w = init_weights<double>(cfg, 1, true);
};

}  // namespace

TEST(ReconLoss, ValuesAndLoopOracle) {
    std::mt19937_64 rng(1);
    const auto a = random_uniform<double>(Shape{1, 3, 5, 6}, rng), b = random_uniform<double>(Shape{1, 3, 5, 6}, rng);
    EXPECT_EQ(image_recon_loss(a, a), 0.0);
    EXPECT_EQ(feature_recon_loss(a, a), 0.0);
    EXPECT_NEAR(feature_recon_loss(a, 2.0 * a), 1.0, 1e-15);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
    }
    EXPECT_NEAR(image_recon_loss(a, b), num / 90.0, 1e-12);
    EXPECT_NEAR(feature_recon_loss(a, b), num / den, 1e-12);
    EXPECT_THROW(feature_recon_loss(Tensor<double>(a.shape()), a), std::domain_error);
}

TEST(GramLoss, SelfIsZeroAndLevelsRenormalize) {
    Model m;
    std::mt19937_64 rng(2);
    const auto img = random_uniform<double>(Shape{1, 3, 16, 16}, rng);
    const auto g = gram_style_loss(img, img, m.cfg, m.w);
    ASSERT_EQ(g.per_level.size(), 4u);
    EXPECT_EQ(g.weighted, 0.0);
    EXPECT_TRUE(g.renormalized);
    for (double x : g.weights) EXPECT_DOUBLE_EQ(x, 0.25);
    auto plain = m.w;
    plain.metric_block.clear();
    EXPECT_EQ(gram_style_loss(img, img, m.cfg, plain).per_level.size(), 3u);
}

TEST(GramLoss, PermutedChannelsMatchDirectOracle) {
    Model m;
    std::mt19937_64 rng(3);
    const auto img = random_uniform<double>(Shape{1, 3, 12, 12}, rng);
    Tensor<double> perm(img.shape());
    for (std::size_t c = 0; c < 3; ++c) std::copy_n(img.plane(0, (c + 1) % 3), 144, perm.plane(0, c));
    const auto g = gram_style_loss(perm, img, m.cfg, m.w);
    const auto to = metric_taps(perm, m.cfg, m.w), ts = metric_taps(img, m.cfg, m.w);
    double weighted = 0;
    for (std::size_t l = 0; l < to.size(); ++l) {
        const auto& a = to[l];
        const auto& b = ts[l];
        const std::size_t C = a.c();
        double d = 0;
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                double ga = 0, gb = 0;
                for (std::size_t p = 0; p < a.h() * a.w(); ++p) ga += a.plane(0, i)[p] * a.plane(0, j)[p];
                for (std::size_t p = 0; p < b.h() * b.w(); ++p) gb += b.plane(0, i)[p] * b.plane(0, j)[p];
                ga /= double(a.h() * a.w());
                gb /= double(b.h() * b.w());
                d += (ga - gb) * (ga - gb);
            }
        EXPECT_NEAR(g.per_level[l], d, 1e-9 * std::max(1.0, d));
        weighted += 0.25 * d;
    }
    EXPECT_GT(g.weighted, 0.0);
    EXPECT_NEAR(g.weighted, weighted, 1e-9 * weighted);
}

TEST(GramLoss, ConstantImagesRankOne) {
    Model m;
    const Tensor<double> a(Shape{1, 3, 8, 8}, 0.2), b(Shape{1, 3, 8, 8}, 0.7);
    const auto g = gram_style_loss(a, b, m.cfg, m.w);
    const auto ta = metric_taps(a, m.cfg, m.w), tb = metric_taps(b, m.cfg, m.w);
    for (std::size_t l = 0; l < ta.size(); ++l) {
        Eigen::VectorXd va(Eigen::Index(ta[l].c())), vb(Eigen::Index(tb[l].c()));
        for (std::size_t c = 0; c < ta[l].c(); ++c) {
            va(Eigen::Index(c)) = ta[l](0, c, 0, 0);
            vb(Eigen::Index(c)) = tb[l](0, c, 0, 0);
        }
        const double expect = (va * va.transpose() - vb * vb.transpose()).squaredNorm();
        EXPECT_NEAR(g.per_level[l], expect, 1e-10 * std::max(1.0, expect));
    }
}

TEST(Matting, MatchesWindowOracle) {
    std::mt19937_64 rng(4);
    for (std::size_t c : {1u, 3u}) {
        const auto img = random_uniform<double>(Shape{1, c, 4, 4}, rng);
        const Eigen::MatrixXd L = Eigen::MatrixXd(matting_laplacian(img, 1, 1e-7));
        EXPECT_LE((L - laplacian_oracle(img, 1e-7)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Matting, SymmetricPsdZeroRowSums) {
    std::mt19937_64 rng(5);
    const auto img = random_uniform<double>(Shape{1, 3, 8, 8}, rng);
    const Eigen::MatrixXd L = Eigen::MatrixXd(matting_laplacian(img));
    EXPECT_LE((L - L.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((L * Eigen::VectorXd::Ones(64)).cwiseAbs().maxCoeff(), 1e-8);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(Matting, ConstantImageConstantVectorIsZero) {
    const Tensor<double> img(Shape{1, 3, 6, 7}, 0.5);
    const auto L = matting_laplacian(img);
    const Tensor<double> x(Shape{1, 3, 6, 7}, 0.8);
    EXPECT_NEAR(laplacian_quadratic(L, x), 0.0, 1e-10);
    EXPECT_THROW(matting_laplacian(Tensor<double>(Shape{1, 3, 2, 8})), ShapeError);
}

TEST(RegularizedLoss, CompositionAndLambda) {
    Model m;
    std::mt19937_64 rng(6);
    const auto img = random_uniform<double>(Shape{1, 3, 10, 10}, rng);
    const auto r = regularized_style_loss(img, img, img, m.cfg, m.w);
    const double q = laplacian_quadratic(matting_laplacian(img), img);
    EXPECT_GT(q, 0.0);
    EXPECT_NEAR(r.total_raw, 100.0 * q, 1e-9 * q);
    EXPECT_NEAR(r.reg_per_pixel, q / 100.0, 1e-12);
    EXPECT_EQ(r.downscale, 1.0);

    const auto other = random_uniform<double>(Shape{1, 3, 10, 10}, rng);
    StyleLossConfig zero;
    zero.lambda_reg = 0;
    const auto z = regularized_style_loss(other, img, img, m.cfg, m.w, zero);
    EXPECT_DOUBLE_EQ(z.total_raw, gram_style_loss(other, img, m.cfg, m.w).weighted);
    double prev = -1;
    for (double lam : {0.0, 1.0, 10.0, 100.0}) {
        StyleLossConfig c;
        c.lambda_reg = lam;
        const double t = regularized_style_loss(other, img, img, m.cfg, m.w, c).total_raw;
        EXPECT_GT(t, prev);
        prev = t;
    }
}

TEST(RegularizedLoss, DownscalesLargeImages) {
    Model m;
    std::mt19937_64 rng(7);
    const auto img = random_uniform<double>(Shape{1, 3, 80, 100}, rng);
    const auto r = regularized_style_loss(img, img, img, m.cfg, m.w);
    EXPECT_DOUBLE_EQ(r.downscale, 0.64);
}

TEST(Normalize, TwoPointAndDegenerate) {
    const auto s = normalize_losses({{1.0, 2.0}, {3.0, 2.0}});
    EXPECT_NEAR(s.normalized[0][0], -1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(s.normalized[1][0], 1 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(s.normalized[0][1], 0.0);
    EXPECT_EQ(s.normalized[1][1], 0.0);
    const double x = 3.53329385916;
    for (double v : normalize_losses({{x, 0.1}, {x, 0.1}, {x, 0.1}}).method_mean) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(normalize_losses({{1.0}}), std::invalid_argument);
    EXPECT_THROW(normalize_losses({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST(Normalize, RandomGridsSumToZeroAndKeepOrder) {
    std::mt19937_64 rng(8);
    std::lognormal_distribution<double> ld(0, 2);
    for (int t = 0; t < 10; ++t) {
        std::vector<std::vector<double>> raw(5, std::vector<double>(20));
        for (auto& row : raw)
            for (auto& v : row) v = ld(rng);
        const auto s = normalize_losses(raw);
        for (std::size_t p = 0; p < 20; ++p) {
            double sum = 0, ss = 0;
            for (std::size_t m = 0; m < 5; ++m) {
                sum += s.normalized[m][p];
                ss += s.normalized[m][p] * s.normalized[m][p];
            }
            EXPECT_LE(std::abs(sum), 1e-10);
            EXPECT_NEAR(ss / 4, 1.0, 1e-10);
            std::vector<std::size_t> a(5), b(5);
            std::iota(a.begin(), a.end(), 0);
            std::iota(b.begin(), b.end(), 0);
            std::sort(a.begin(), a.end(), [&](auto i, auto j) { return raw[i][p] < raw[j][p]; });
            std::sort(b.begin(), b.end(), [&](auto i, auto j) { return s.normalized[i][p] < s.normalized[j][p]; });
            EXPECT_EQ(a, b);
        }
    }
}
