#pragma once

// Whitening-colouring transform on (n, c, h, w) features. Statistics pool all
// n·h·w positions and are computed in double regardless of T.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/tensor.hpp"

namespace hfw {

struct ZcaOptions {
    double eps_clamp = 1e-8;  // relative to the largest eigenvalue
    double alpha = 1.0;

    void validate() const {
        if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("zca: alpha must be in [0, 1]");
        if (!(eps_clamp >= 0) || !std::isfinite(eps_clamp)) throw std::invalid_argument("zca: eps_clamp must be >= 0");
    }
};

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd eigvecs;  // columns, matching eigvals
    Eigen::VectorXd eigvals;  // descending, clamped
    std::size_t sample_count = 0;

    [[nodiscard]] std::size_t channels() const { return static_cast<std::size_t>(mean.size()); }
    [[nodiscard]] Eigen::MatrixXd covariance() const { return eigvecs * eigvals.asDiagonal() * eigvecs.transpose(); }
};

namespace detail {

/// Columns are positions, rows channels.
template <class T>
Eigen::MatrixXd feature_matrix(const Tensor<T>& f) {
    const auto C = static_cast<Eigen::Index>(f.c());
    const std::size_t hw = f.h() * f.w();
    Eigen::MatrixXd m(C, static_cast<Eigen::Index>(f.n() * hw));
    for (std::size_t b = 0; b < f.n(); ++b)
        for (std::size_t c = 0; c < f.c(); ++c) {
            const T* p = f.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) m(Eigen::Index(c), Eigen::Index(b * hw + i)) = double(p[i]);
        }
    return m;
}

template <class T>
Tensor<T> from_feature_matrix(const Eigen::MatrixXd& m, const Shape& s) {
    Tensor<T> out(s);
    const std::size_t hw = s.h * s.w;
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c) {
            T* p = out.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) p[i] = static_cast<T>(m(Eigen::Index(c), Eigen::Index(b * hw + i)));
        }
    return out;
}

inline FeatureStats stats_of_matrix(const Eigen::MatrixXd& m, double eps_clamp) {
    if (m.rows() < 1 || m.cols() < 1) throw std::invalid_argument("feature_stats: empty feature");
    if (!m.allFinite()) throw std::invalid_argument("feature_stats: non-finite feature values");
    FeatureStats st;
    st.sample_count = static_cast<std::size_t>(m.cols());
    st.mean = m.rowwise().mean();
    const Eigen::MatrixXd centred = m.colwise() - st.mean;
    const Eigen::MatrixXd cov = centred * centred.transpose() / double(m.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("feature_stats: eigendecomposition failed");
    const auto C = cov.rows();
    st.eigvals.resize(C);
    st.eigvecs.resize(C, C);
    for (Eigen::Index j = 0; j < C; ++j) {  // Eigen sorts ascending
        const Eigen::Index src = C - 1 - j;
        Eigen::VectorXd v = es.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        st.eigvecs.col(j) = v;
        st.eigvals(j) = es.eigenvalues()(src);
    }
    const double top = std::max(st.eigvals(0), 0.0);
    const double floor = eps_clamp * (top > 0 ? top : 1.0);
    for (Eigen::Index j = 0; j < C; ++j) st.eigvals(j) = std::max(st.eigvals(j), floor);
    return st;
}

/// Whitening-colouring matrix E_s Λ_s^{1/2} E_sᵀ · E_c Λ_c^{-1/2} E_cᵀ.
inline Eigen::MatrixXd zca_matrix(const FeatureStats& content, const FeatureStats& style) {
    const Eigen::MatrixXd white =
        content.eigvecs * content.eigvals.cwiseSqrt().cwiseInverse().asDiagonal() * content.eigvecs.transpose();
    const Eigen::MatrixXd colour = style.eigvecs * style.eigvals.cwiseSqrt().asDiagonal() * style.eigvecs.transpose();
    return colour * white;
}

inline Eigen::MatrixXd zca_apply(const Eigen::MatrixXd& fc, const FeatureStats& style, const ZcaOptions& opts) {
    const FeatureStats content = stats_of_matrix(fc, opts.eps_clamp);
    Eigen::MatrixXd out = (zca_matrix(content, style) * (fc.colwise() - content.mean)).colwise() + style.mean;
    if (opts.alpha < 1) out = opts.alpha * out + (1 - opts.alpha) * fc;
    return out;
}

}  // namespace detail

template <class T>
FeatureStats feature_stats(const Tensor<T>& f, double eps_clamp = ZcaOptions{}.eps_clamp) {
    return detail::stats_of_matrix(detail::feature_matrix(f), eps_clamp);
}

template <class T>
Tensor<T> zca_transform(const Tensor<T>& fc, const FeatureStats& style, const ZcaOptions& opts = {}) {
    opts.validate();
    if (fc.c() != style.channels())
        throw ShapeError("zca_transform: content has " + std::to_string(fc.c()) + " channels, style stats " +
                         std::to_string(style.channels()));
    return detail::from_feature_matrix<T>(detail::zca_apply(detail::feature_matrix(fc), style, opts), fc.shape());
}

/// Single-channel integer label map.
struct LabelMap {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> labels;

    [[nodiscard]] std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }

    /// Nearest-neighbour resize to (h, w).
    [[nodiscard]] LabelMap resized(std::size_t h, std::size_t w) const {
        if (width == 0 || height == 0) throw std::invalid_argument("LabelMap: empty map");
        LabelMap out{w, h, std::vector<std::uint8_t>(w * h)};
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = std::min(height - 1, (y * height) / h);
            for (std::size_t x = 0; x < w; ++x) out.labels[y * w + x] = at(sy, std::min(width - 1, (x * width) / w));
        }
        return out;
    }

    [[nodiscard]] std::set<std::uint8_t> alphabet() const { return {labels.begin(), labels.end()}; }
};

/// Labels of `a` absent from `b`.
inline std::vector<int> unmatched_labels(const LabelMap& a, const LabelMap& b) {
    const auto sb = b.alphabet();
    std::vector<int> out;
    for (auto l : a.alphabet())
        if (!sb.count(l)) out.push_back(l);
    return out;
}

/// Per-label ZCA. Content segments whose label is missing from the style map
/// use whole-image style statistics. Label maps are resized to the feature size.
template <class T>
Tensor<T> label_guided_zca(const Tensor<T>& fc, const Tensor<T>& fs, const LabelMap& content_labels,
                           const LabelMap& style_labels, const ZcaOptions& opts = {}) {
    opts.validate();
    if (fc.c() != fs.c())
        throw ShapeError("label_guided_zca: channel mismatch " + std::to_string(fc.c()) + " vs " +
                         std::to_string(fs.c()));
    if (fc.n() != 1 || fs.n() != 1) throw ShapeError("label_guided_zca: batch size must be 1");
    if (content_labels.labels.empty()) throw std::invalid_argument("label_guided_zca: empty content label set");
    if (style_labels.labels.empty()) throw std::invalid_argument("label_guided_zca: empty style label set");
    const LabelMap cl = content_labels.resized(fc.h(), fc.w());
    const LabelMap sl = style_labels.resized(fs.h(), fs.w());
    const Eigen::MatrixXd mc = detail::feature_matrix(fc), ms = detail::feature_matrix(fs);
    const FeatureStats whole_style = detail::stats_of_matrix(ms, opts.eps_clamp);

    std::map<std::uint8_t, std::vector<Eigen::Index>> cpos, spos;
    for (std::size_t i = 0; i < cl.labels.size(); ++i) cpos[cl.labels[i]].push_back(Eigen::Index(i));
    for (std::size_t i = 0; i < sl.labels.size(); ++i) spos[sl.labels[i]].push_back(Eigen::Index(i));

    Eigen::MatrixXd out(mc.rows(), mc.cols());
    for (const auto& [label, idx] : cpos) {
        Eigen::MatrixXd seg(mc.rows(), Eigen::Index(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) seg.col(Eigen::Index(j)) = mc.col(idx[j]);
        FeatureStats style = whole_style;
        if (auto it = spos.find(label); it != spos.end()) {
            Eigen::MatrixXd sseg(ms.rows(), Eigen::Index(it->second.size()));
            for (std::size_t j = 0; j < it->second.size(); ++j) sseg.col(Eigen::Index(j)) = ms.col(it->second[j]);
            style = detail::stats_of_matrix(sseg, opts.eps_clamp);
        }
        const Eigen::MatrixXd res = detail::zca_apply(seg, style, opts);
        for (std::size_t j = 0; j < idx.size(); ++j) out.col(idx[j]) = res.col(Eigen::Index(j));
    }
    return detail::from_feature_matrix<T>(out, fc.shape());
}

}  // namespace hfw
