#pragma once

// Evaluation metrics: reconstruction losses, Gram style loss, the matting
// Laplacian regulariser and per-pair z-score normalisation across methods.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/dataset.hpp"
#include "hfw/model.hpp"
#include "hfw/training.hpp"
#include "hfw/zca.hpp"

namespace hfw {

template <class T>
double image_recon_loss(const Tensor<T>& img, const Tensor<T>& rec) {
    return image_loss(img, rec);
}

template <class T>
double feature_recon_loss(const Tensor<T>& f, const Tensor<T>& fr) {
    return relative_feature_loss(f, fr);
}

struct StyleLossConfig {
    std::vector<double> beta{0.2, 0.2, 0.2, 0.2, 0.2};  // level l at index l-1
    double lambda_reg = 100.0;
    std::size_t window_radius = 1;  // 3×3
    double matting_eps = 1e-7;
    std::size_t max_side = 64;  // regulariser images are downscaled to fit

    void validate() const {
        if (beta.empty()) throw std::invalid_argument("StyleLossConfig: beta is empty");
        for (double b : beta)
            if (!(b >= 0)) throw std::invalid_argument("StyleLossConfig: beta must be >= 0");
        if (!(lambda_reg >= 0)) throw std::invalid_argument("StyleLossConfig: lambda_reg must be >= 0");
        if (window_radius == 0) throw std::invalid_argument("StyleLossConfig: window radius must be >= 1");
        if (!(matting_eps > 0)) throw std::invalid_argument("StyleLossConfig: matting eps must be > 0");
        if (max_side < 3) throw std::invalid_argument("StyleLossConfig: max_side must be >= 3");
    }
};

// ---- Gram loss -------------------------------------------------------------------

/// reluN_1 taps for N = 1..D, plus relu(D+1)_1 when the weights carry a metric block.
template <class T>
std::vector<Tensor<T>> metric_taps(const Tensor<T>& image, const ModelConfig& cfg, const BlockWeights<T>& w) {
    auto e = encode(image, cfg, w);
    auto taps = std::move(e.taps.features);
    if (!w.metric_block.empty()) {
        EagerExec<T> ex(w);
        Tensor<T> x = taps.back();
        for (std::size_t i = 0; i + 1 < w.metric_block.size(); ++i) x = ex.relu(ex.metric_conv(x, i));
        x = ex.pad_even(x, even_pad_for(x.shape()));
        x = ex.max_pool(x).first;
        taps.push_back(ex.relu(ex.metric_conv(x, w.metric_block.size() - 1)));
    }
    return taps;
}

/// F Fᵀ / (H·W), positions pooled over the batch.
template <class T>
Eigen::MatrixXd gram_matrix(const Tensor<T>& f) {
    const Eigen::MatrixXd m = detail::feature_matrix(f);
    return m * m.transpose() / double(f.h() * f.w());
}

struct GramLoss {
    std::vector<double> per_level;  // unweighted, level l at index l-1
    std::vector<double> weights;    // beta renormalised over the available levels
    double weighted = 0;
    bool renormalized = false;  // fewer levels than beta entries
};

inline GramLoss combine_gram_levels(std::vector<double> per_level, const StyleLossConfig& cfg) {
    cfg.validate();
    GramLoss g;
    g.per_level = std::move(per_level);
    const std::size_t levels = std::min(g.per_level.size(), cfg.beta.size());
    g.renormalized = levels < cfg.beta.size();
    double total = 0;
    for (std::size_t l = 0; l < levels; ++l) total += cfg.beta[l];
    if (total <= 0) throw std::invalid_argument("gram_style_loss: beta weights sum to zero over available levels");
    g.weights.resize(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        g.weights[l] = cfg.beta[l] / total;
        g.weighted += g.weights[l] * g.per_level[l];
    }
    return g;
}

template <class T>
GramLoss gram_style_loss(const Tensor<T>& output, const Tensor<T>& style, const ModelConfig& mcfg,
                         const BlockWeights<T>& w, const StyleLossConfig& cfg = {}) {
    const auto to = metric_taps(output, mcfg, w), ts = metric_taps(style, mcfg, w);
    std::vector<double> per;
    for (std::size_t l = 0; l < to.size(); ++l) per.push_back((gram_matrix(to[l]) - gram_matrix(ts[l])).squaredNorm());
    return combine_gram_levels(std::move(per), cfg);
}

// ---- matting Laplacian -------------------------------------------------------------

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Closed-form matting Laplacian over (2r+1)² windows fully inside the image.
/// The colour model uses all channels of `image` (batch 1).
template <class T>
SparseMatrix matting_laplacian(const Tensor<T>& image, std::size_t radius = 1, double eps = 1e-7) {
    if (image.n() != 1) throw ShapeError("matting_laplacian: batch size must be 1");
    const std::size_t win = 2 * radius + 1;
    if (image.h() < win || image.w() < win)
        throw ShapeError("matting_laplacian: image " + image.shape().str() + " smaller than the window");
    const std::size_t h = image.h(), w = image.w(), C = image.c(), P = h * w, nwin = win * win;
    const auto Ci = Eigen::Index(C);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve((h - win + 1) * (w - win + 1) * nwin * nwin);
    Eigen::MatrixXd I(Eigen::Index(nwin), Ci);
    std::vector<Eigen::Index> idx(nwin);
    for (std::size_t y = radius; y + radius < h; ++y)
        for (std::size_t x = radius; x + radius < w; ++x) {
            std::size_t k = 0;
            for (std::size_t dy = 0; dy < win; ++dy)
                for (std::size_t dx = 0; dx < win; ++dx, ++k) {
                    const std::size_t py = y + dy - radius, px = x + dx - radius;
                    idx[k] = Eigen::Index(py * w + px);
                    for (std::size_t c = 0; c < C; ++c) I(Eigen::Index(k), Eigen::Index(c)) = double(image(0, c, py, px));
                }
            const Eigen::RowVectorXd mu = I.colwise().mean();
            const Eigen::MatrixXd D = I.rowwise() - mu;
            const Eigen::MatrixXd cov = D.transpose() * D / double(nwin);
            const Eigen::MatrixXd inv =
                (cov + (eps / double(nwin)) * Eigen::MatrixXd::Identity(Ci, Ci)).inverse();
            const Eigen::MatrixXd G = (Eigen::MatrixXd::Ones(Eigen::Index(nwin), Eigen::Index(nwin)) + D * inv * D.transpose()) / double(nwin);
            for (std::size_t i = 0; i < nwin; ++i)
                for (std::size_t j = 0; j < nwin; ++j)
                    trip.emplace_back(idx[i], idx[j], (i == j ? 1.0 : 0.0) - G(Eigen::Index(i), Eigen::Index(j)));
        }
    SparseMatrix L{static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P)};
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

/// Σ_ch vec(x_ch)ᵀ L vec(x_ch).
template <class T>
double laplacian_quadratic(const SparseMatrix& L, const Tensor<T>& x) {
    if (Eigen::Index(x.h() * x.w()) != L.rows()) throw ShapeError("laplacian_quadratic: size mismatch");
    double q = 0;
    const std::size_t hw = x.h() * x.w();
    for (std::size_t c = 0; c < x.c(); ++c) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(hw));
        for (std::size_t i = 0; i < hw; ++i) v(Eigen::Index(i)) = double(x.plane(0, c)[i]);
        q += v.dot(L * v);
    }
    return q;
}

// ---- regularised style loss -----------------------------------------------------------

struct StyleLossReport {
    GramLoss gram;
    double reg_raw = 0;        // Σ_ch xᵀ M x at the regulariser resolution
    double reg_per_pixel = 0;  // reg_raw / pixel count
    double total_raw = 0;      // gram.weighted + λ·reg_raw
    double total_per_pixel = 0;
    double downscale = 1;  // regulariser side / original side
};

template <class T>
Tensor<T> fit_within(const Tensor<T>& img, std::size_t max_side, double* factor) {
    const std::size_t side = std::max(img.h(), img.w());
    if (side <= max_side) {
        if (factor) *factor = 1;
        return img;
    }
    const double f = double(max_side) / double(side);
    if (factor) *factor = f;
    const auto oh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(img.h()) * f)));
    const auto ow = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(img.w()) * f)));
    return resize_bilinear(img, oh, ow);
}

template <class T>
StyleLossReport regularized_style_loss(const Tensor<T>& output, const Tensor<T>& content, const Tensor<T>& style,
                                       const ModelConfig& mcfg, const BlockWeights<T>& w,
                                       const StyleLossConfig& cfg = {}) {
    cfg.validate();
    require_same_shape(output.shape(), content.shape(), "regularized_style_loss");
    StyleLossReport r;
    r.gram = gram_style_loss(output, style, mcfg, w, cfg);
    const auto o = fit_within(output, cfg.max_side, &r.downscale);
    const auto c = fit_within(content, cfg.max_side, nullptr);
    const auto L = matting_laplacian(c, cfg.window_radius, cfg.matting_eps);
    r.reg_raw = laplacian_quadratic(L, o);
    r.reg_per_pixel = r.reg_raw / double(o.h() * o.w());
    r.total_raw = r.gram.weighted + cfg.lambda_reg * r.reg_raw;
    r.total_per_pixel = r.gram.weighted + cfg.lambda_reg * r.reg_per_pixel;
    return r;
}

// ---- normalisation ----------------------------------------------------------------------

struct NormalizedScore {
    std::vector<std::vector<double>> raw;         // [method][pair]
    std::vector<double> mu, sigma;                // per pair
    std::vector<std::vector<double>> normalized;  // [method][pair]
    std::vector<double> method_mean;
};

/// Per-pair z-scores with the sample standard deviation. σ at rounding level
/// (identical losses) gives zeros.
inline NormalizedScore normalize_losses(const std::vector<std::vector<double>>& raw) {
    if (raw.size() < 2) throw std::invalid_argument("normalize_losses: need at least 2 methods");
    const std::size_t pairs = raw[0].size();
    for (const auto& row : raw)
        if (row.size() != pairs) throw std::invalid_argument("normalize_losses: ragged method x pair grid");
    const std::size_t M = raw.size();
    NormalizedScore s;
    s.raw = raw;
    s.mu.assign(pairs, 0);
    s.sigma.assign(pairs, 0);
    s.normalized.assign(M, std::vector<double>(pairs, 0));
    for (std::size_t p = 0; p < pairs; ++p) {
        double mu = 0;
        for (std::size_t m = 0; m < M; ++m) mu += raw[m][p];
        mu /= double(M);
        double ss = 0;
        for (std::size_t m = 0; m < M; ++m) ss += (raw[m][p] - mu) * (raw[m][p] - mu);
        const double sigma = std::sqrt(ss / double(M - 1));
        s.mu[p] = mu;
        s.sigma[p] = sigma;
        double scale = 0;
        for (std::size_t m = 0; m < M; ++m) scale = std::max(scale, std::abs(raw[m][p]));
        if (sigma > 1e-12 * scale)
            for (std::size_t m = 0; m < M; ++m) s.normalized[m][p] = (raw[m][p] - mu) / sigma;
    }
    s.method_mean.assign(M, 0);
    for (std::size_t m = 0; m < M; ++m) {
        for (double v : s.normalized[m]) s.method_mean[m] += v;
        if (pairs) s.method_mean[m] /= double(pairs);
    }
    return s;
}

}  // namespace hfw
