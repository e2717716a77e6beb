#include <gtest/gtest.h>

#include <random>

#include "hfw/zca.hpp"

using namespace hfw;

namespace {

// Well-conditioned feature: random mixing of unit-variance sources plus a mean.
Tensor<double> mixed_feature(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    auto src = random_normal<double>(Shape{1, c, h, w}, rng);
    Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(Eigen::Index(c), Eigen::Index(c));
    std::normal_distribution<double> nd(0, 0.3);
    for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] += nd(rng);
    Eigen::MatrixXd m = mix * detail::feature_matrix(src);
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).array() += nd(rng);
    return detail::from_feature_matrix<double>(m, src.shape());
}

Eigen::MatrixXd direct_cov(const Tensor<double>& f) {
    const Eigen::MatrixXd m = detail::feature_matrix(f);
    const Eigen::MatrixXd c = m.colwise() - m.rowwise().mean();
    return c * c.transpose() / double(m.cols());
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(FeatureStats, DiagonalCovariance) {
    // channel 0: ±sqrt(2), channel 1: ±1, uncorrelated over 4 positions
    const double s = std::sqrt(2.0);
    Tensor<double> f(Shape{1, 2, 2, 2}, {s, -s, s, -s, 1, 1, -1, -1});
    const auto st = feature_stats(f);
    EXPECT_NEAR(st.eigvals(0), 2.0, 1e-12);
    EXPECT_NEAR(st.eigvals(1), 1.0, 1e-12);
    EXPECT_LE((st.eigvecs - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-12);
    EXPECT_EQ(st.sample_count, 4u);
}

TEST(FeatureStats, IdenticalColumnsClamp) {
    Tensor<double> f(Shape{1, 3, 2, 3});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 6; ++i) f.plane(0, c)[i] = double(c) + 0.5;
    const auto st = feature_stats(f);
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(st.eigvals(j), 1e-8);
    EXPECT_NEAR(st.mean(2), 2.5, 1e-15);
}

TEST(FeatureStats, ReconstructsCovarianceAndSignConvention) {
    std::mt19937_64 rng(3);
    const auto f = random_uniform<double>(Shape{1, 4, 5, 5}, rng);
    const auto st = feature_stats(f);
    EXPECT_LE(rel(st.covariance(), direct_cov(f)), 1e-10);
    for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::Index arg = 0;
        st.eigvecs.col(j).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(st.eigvecs(arg, j), 0.0);
        if (j > 0) {
            EXPECT_GE(st.eigvals(j - 1), st.eigvals(j));
        }
    }
}

TEST(FeatureStats, NonFiniteIsAnError) {
    Tensor<double> f(Shape{1, 1, 1, 2}, {1.0, std::nan("")});
    EXPECT_THROW(feature_stats(f), std::invalid_argument);
}

TEST(Zca, SelfStatsIsIdentity) {
    std::mt19937_64 rng(4);
    const auto fc = mixed_feature(6, 7, 9, rng);
    const auto out = zca_transform(fc, feature_stats(fc));
    EXPECT_LE(std::sqrt(sum_squares(out - fc) / sum_squares(fc)), 1e-8);
}

TEST(Zca, MatchesStyleCovarianceAndMean) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        std::uniform_int_distribution<std::size_t> cd(1, 32);
        const std::size_t c = cd(rng);
        const auto fc = mixed_feature(c, 12, 12, rng), fs = mixed_feature(c, 10, 14, rng);
        const auto out = zca_transform(fc, feature_stats(fs));
        EXPECT_LE(rel(direct_cov(out), direct_cov(fs)), 1e-6) << "c=" << c;
        const Eigen::VectorXd mo = detail::feature_matrix(out).rowwise().mean();
        const Eigen::VectorXd ms = detail::feature_matrix(fs).rowwise().mean();
        EXPECT_LE((mo - ms).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Zca, ScalarClosedForm) {
    std::mt19937_64 rng(6);
    const auto fc = random_uniform<double>(Shape{1, 1, 4, 5}, rng), fs = random_uniform<double>(Shape{1, 1, 3, 3}, rng);
    const auto sc = feature_stats(fc), ss = feature_stats(fs);
    const auto out = zca_transform(fc, ss);
    const double k = std::sqrt(ss.eigvals(0) / sc.eigvals(0));
    for (std::size_t i = 0; i < fc.numel(); ++i) EXPECT_NEAR(out[i], k * (fc[i] - sc.mean(0)) + ss.mean(0), 1e-12);
}

TEST(Zca, IdempotentAndBlend) {
    std::mt19937_64 rng(7);
    const auto fc = mixed_feature(5, 8, 8, rng), fs = mixed_feature(5, 8, 8, rng);
    const auto ss = feature_stats(fs);
    const auto once = zca_transform(fc, ss), twice = zca_transform(once, ss);
    EXPECT_LE(std::sqrt(sum_squares(twice - once) / sum_squares(once)), 1e-6);
    ZcaOptions half;
    half.alpha = 0.25;
    const auto blended = zca_transform(fc, ss, half);
    EXPECT_LE(max_abs_diff(blended, 0.25 * once + 0.75 * fc), 1e-12);
    ZcaOptions none;
    none.alpha = 0;
    EXPECT_LE(max_abs_diff(zca_transform(fc, ss, none), fc), 1e-15);
    ZcaOptions bad;
    bad.alpha = 1.5;
    EXPECT_THROW(zca_transform(fc, ss, bad), std::invalid_argument);
}

TEST(Zca, ChannelMismatchIsAnError) {
    std::mt19937_64 rng(8);
    const auto fc = random_uniform<double>(Shape{1, 3, 4, 4}, rng);
    EXPECT_THROW(zca_transform(fc, feature_stats(random_uniform<double>(Shape{1, 2, 4, 4}, rng))), ShapeError);
}

TEST(Zca, SingularContentIsClampedNotFatal) {
    Tensor<double> fc(Shape{1, 2, 3, 3}, 0.4);
    std::mt19937_64 rng(9);
    const auto out = zca_transform(fc, feature_stats(random_uniform<double>(Shape{1, 2, 3, 3}, rng)));
    EXPECT_TRUE(all_finite(out));
}

TEST(LabelGuided, UniformLabelEqualsPlainZca) {
    std::mt19937_64 rng(10);
    const auto fc = mixed_feature(4, 6, 6, rng), fs = mixed_feature(4, 5, 7, rng);
    const LabelMap lc{12, 12, std::vector<std::uint8_t>(144, 3)}, ls{7, 5, std::vector<std::uint8_t>(35, 3)};
    EXPECT_LE(max_abs_diff(label_guided_zca(fc, fs, lc, ls), zca_transform(fc, feature_stats(fs))), 1e-12);
}

TEST(LabelGuided, StyleEqualContentPerSegmentIsIdentity) {
    std::mt19937_64 rng(11);
    const auto fc = mixed_feature(3, 8, 8, rng);
    LabelMap lab{8, 8, std::vector<std::uint8_t>(64)};
    for (std::size_t i = 0; i < 64; ++i) lab.labels[i] = (i % 8) < 4 ? 1 : 2;
    const auto out = label_guided_zca(fc, fc, lab, lab);
    EXPECT_LE(std::sqrt(sum_squares(out - fc) / sum_squares(fc)), 1e-8);
}

TEST(LabelGuided, PerSegmentCovarianceMatchesStyleSegment) {
    std::mt19937_64 rng(12);
    const auto fc = mixed_feature(3, 8, 8, rng), fs = mixed_feature(3, 8, 8, rng);
    LabelMap lc{8, 8, std::vector<std::uint8_t>(64)}, ls{8, 8, std::vector<std::uint8_t>(64)};
    for (std::size_t i = 0; i < 64; ++i) {
        lc.labels[i] = i < 32 ? 0 : 1;
        ls.labels[i] = (i % 8) < 4 ? 0 : 1;
    }
    const auto out = label_guided_zca(fc, fs, lc, ls);
    const Eigen::MatrixXd mo = detail::feature_matrix(out), ms = detail::feature_matrix(fs);
    for (std::uint8_t l : {0, 1}) {
        std::vector<Eigen::Index> oi, si;
        for (std::size_t i = 0; i < 64; ++i) {
            if (lc.labels[i] == l) oi.push_back(Eigen::Index(i));
            if (ls.labels[i] == l) si.push_back(Eigen::Index(i));
        }
        auto cov = [](const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
            Eigen::MatrixXd s(m.rows(), Eigen::Index(idx.size()));
            for (std::size_t j = 0; j < idx.size(); ++j) s.col(Eigen::Index(j)) = m.col(idx[j]);
            const Eigen::MatrixXd c = s.colwise() - s.rowwise().mean();
            return Eigen::MatrixXd(c * c.transpose() / double(s.cols()));
        };
        EXPECT_LE(rel(cov(mo, oi), cov(ms, si)), 1e-6);
    }
}

TEST(LabelGuided, MissingStyleLabelFallsBackToWholeImage) {
    std::mt19937_64 rng(13);
    const auto fc = mixed_feature(3, 6, 6, rng), fs = mixed_feature(3, 6, 6, rng);
    const LabelMap lc{6, 6, std::vector<std::uint8_t>(36, 9)}, ls{6, 6, std::vector<std::uint8_t>(36, 4)};
    EXPECT_LE(max_abs_diff(label_guided_zca(fc, fs, lc, ls), zca_transform(fc, feature_stats(fs))), 1e-12);
    EXPECT_EQ(unmatched_labels(lc, ls), std::vector<int>{9});
    EXPECT_THROW(label_guided_zca(fc, fs, LabelMap{}, ls), std::invalid_argument);
}

TEST(LabelMap, NearestResize) {
    const LabelMap m{2, 2, {1, 2, 3, 4}};
    const auto r = m.resized(4, 4);
    EXPECT_EQ(r.at(0, 0), 1);
    EXPECT_EQ(r.at(1, 3), 2);
    EXPECT_EQ(r.at(3, 0), 3);
    EXPECT_EQ(r.at(3, 3), 4);
}
