#pragma once

// Coarse-to-fine stylization in one pass, the multi-round cascade baseline,
// and guided-filter smoothing.

#include <chrono>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/model.hpp"
#include "hfw/zca.hpp"

namespace hfw {

enum class GuideSource : std::uint8_t { content, stylized };

struct GuidedFilterOptions {
    bool enabled = true;
    std::size_t radius = 0;      // 0: max(4, round(50·min(h,w)/768))
    double eps = 0.02 * 0.02;    // for [0,1] images; (0.02·255)² on [0,255]
    GuideSource guide = GuideSource::content;
};

inline std::size_t default_radius(std::size_t h, std::size_t w) {
    const double r = std::round(50.0 * double(std::min(h, w)) / 768.0);
    return std::max<std::size_t>(4, static_cast<std::size_t>(r));
}

struct StylizeOptions {
    std::optional<std::set<std::size_t>> levels;  // nullopt: all of 1..D
    ZcaOptions zca{};
    std::optional<LabelMap> content_labels, style_labels;
    GuidedFilterOptions postprocess{};
    bool cascade = false;

    void validate(const ModelConfig& cfg) const {
        zca.validate();
        if (levels)
            for (auto l : *levels)
                if (l < 1 || l > cfg.depth())
                    throw std::invalid_argument("stylize: level " + std::to_string(l) + " outside 1.." +
                                                std::to_string(cfg.depth()));
        if (content_labels.has_value() != style_labels.has_value())
            throw std::invalid_argument("stylize: label maps must be given for both content and style");
        if (postprocess.enabled && !(postprocess.eps > 0)) throw std::invalid_argument("stylize: eps must be > 0");
    }

    [[nodiscard]] bool enabled(std::size_t level) const { return !levels || levels->count(level) > 0; }
};

template <class T>
struct StyleFeatures {
    FeatureTaps<Tensor<T>> taps;
    std::vector<FeatureStats> stats;  // index N-1
};

struct StylizeTiming {
    double encode = 0, transforms = 0, decode = 0, postprocess = 0;
    [[nodiscard]] double total() const { return encode + transforms + decode + postprocess; }
};

template <class T>
struct StylizeResult {
    Tensor<T> image;      // clamped to [0,1]
    Tensor<T> prefilter;  // clamped, before the guided filter
    std::size_t transforms = 0;
    StylizeTiming timing;
};

template <class T>
StyleFeatures<T> prepare_style(const Tensor<T>& style, const ModelConfig& cfg, const BlockWeights<T>& w,
                               const ZcaOptions& zca = {}) {
    auto e = encode(style, cfg, w);
    StyleFeatures<T> out;
    out.taps = std::move(e.taps);
    for (const auto& f : out.taps.features) out.stats.push_back(feature_stats(f, zca.eps_clamp));
    return out;
}

// ---- guided filter -----------------------------------------------------------------

namespace detail {

/// Mean over the (2r+1)² window clipped to the image.
inline std::vector<double> box_mean(const std::vector<double>& x, std::size_t h, std::size_t w, std::size_t r) {
    std::vector<double> sat((h + 1) * (w + 1), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        double row = 0;
        for (std::size_t i = 0; i < w; ++i) {
            row += x[y * w + i];
            sat[(y + 1) * (w + 1) + i + 1] = sat[y * (w + 1) + i + 1] + row;
        }
    }
    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t y0 = y >= r ? y - r : 0, y1 = std::min(h, y + r + 1);
        for (std::size_t i = 0; i < w; ++i) {
            const std::size_t x0 = i >= r ? i - r : 0, x1 = std::min(w, i + r + 1);
            const double s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] +
                             sat[y0 * (w + 1) + x0];
            out[y * w + i] = s / double((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

template <class T>
std::vector<double> luma(const Tensor<T>& g, std::size_t b) {
    const std::size_t hw = g.h() * g.w();
    std::vector<double> out(hw);
    if (g.c() == 1) {
        for (std::size_t i = 0; i < hw; ++i) out[i] = double(g.plane(b, 0)[i]);
    } else if (g.c() == 3) {
        const T *r = g.plane(b, 0), *gg = g.plane(b, 1), *bb = g.plane(b, 2);
        for (std::size_t i = 0; i < hw; ++i) out[i] = 0.299 * double(r[i]) + 0.587 * double(gg[i]) + 0.114 * double(bb[i]);
    } else {
        throw ShapeError("guided_filter: guide must have 1 or 3 channels");
    }
    return out;
}

}  // namespace detail

/// Gray-guide guided filter applied to every channel of `input`.
template <class T>
Tensor<T> guided_filter(const Tensor<T>& guide, const Tensor<T>& input, std::size_t radius, double eps) {
    if (guide.n() != input.n() || guide.h() != input.h() || guide.w() != input.w())
        throw ShapeError("guided_filter: guide " + guide.shape().str() + " and input " + input.shape().str() +
                         " differ in size");
    if (radius < 1) throw std::invalid_argument("guided_filter: radius must be >= 1");
    if (!(eps > 0)) throw std::invalid_argument("guided_filter: eps must be > 0");
    const std::size_t h = input.h(), w = input.w(), hw = h * w;
    Tensor<T> out(input.shape());
    for (std::size_t b = 0; b < input.n(); ++b) {
        const auto g = detail::luma(guide, b);
        const auto mg = detail::box_mean(g, h, w, radius);
        std::vector<double> gg(hw);
        for (std::size_t i = 0; i < hw; ++i) gg[i] = g[i] * g[i];
        const auto mgg = detail::box_mean(gg, h, w, radius);
        for (std::size_t c = 0; c < input.c(); ++c) {
            std::vector<double> p(hw), gp(hw);
            const T* src = input.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) {
                p[i] = double(src[i]);
                gp[i] = g[i] * p[i];
            }
            const auto mp = detail::box_mean(p, h, w, radius);
            const auto mgp = detail::box_mean(gp, h, w, radius);
            std::vector<double> a(hw), bb(hw);
            for (std::size_t i = 0; i < hw; ++i) {
                const double var = mgg[i] - mg[i] * mg[i];
                a[i] = (mgp[i] - mg[i] * mp[i]) / (var + eps);
                bb[i] = mp[i] - a[i] * mg[i];
            }
            const auto ma = detail::box_mean(a, h, w, radius);
            const auto mb = detail::box_mean(bb, h, w, radius);
            T* dst = out.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<T>(ma[i] * g[i] + mb[i]);
        }
    }
    return out;
}

// ---- stylization ---------------------------------------------------------------------

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class T>
void require_stylizable(const ModelConfig& cfg, const BlockWeights<T>& w, const StyleFeatures<T>& style,
                        const StylizeOptions& opts) {
    opts.validate(cfg);
    check_weights(cfg, w);
    if (!w.fully_trained()) throw std::logic_error("stylize: decoder weights are not trained");
    if (style.stats.size() != cfg.depth())
        throw std::invalid_argument("stylize: style features have " + std::to_string(style.stats.size()) +
                                    " levels, model has " + std::to_string(cfg.depth()));
}

template <class T>
Tensor<T> transform_at(std::size_t level, const Tensor<T>& f, const StyleFeatures<T>& style,
                       const StylizeOptions& opts) {
    if (opts.content_labels)
        return label_guided_zca(f, style.taps.features.at(level - 1), *opts.content_labels, *opts.style_labels,
                                opts.zca);
    return zca_transform(f, style.stats.at(level - 1), opts.zca);
}

template <class T>
void finish(StylizeResult<T>& r, const Tensor<T>& content, Tensor<T> raw, const StylizeOptions& opts) {
    r.prefilter = clamp01(std::move(raw));
    const auto t0 = Clock::now();
    if (opts.postprocess.enabled) {
        const auto& pp = opts.postprocess;
        const std::size_t radius = pp.radius ? pp.radius : default_radius(content.h(), content.w());
        const Tensor<T>& guide = pp.guide == GuideSource::content ? content : r.prefilter;
        r.image = clamp01(guided_filter(guide, r.prefilter, radius, pp.eps));
    } else {
        r.image = r.prefilter;
    }
    r.timing.postprocess = seconds_since(t0);
}

}  // namespace detail

/// One encode, ZCA at the bottleneck (level D) and at the decoder tap sites
/// (levels D-1..1), one decode.
template <class T>
StylizeResult<T> stylize(const Tensor<T>& content, const StyleFeatures<T>& style, const ModelConfig& cfg,
                         const BlockWeights<T>& w, const StylizeOptions& opts = {}) {
    detail::require_stylizable(cfg, w, style, opts);
    StylizeResult<T> r;
    auto t0 = detail::Clock::now();
    auto e = encode(content, cfg, w);
    r.timing.encode = detail::seconds_since(t0);

    Tensor<T> x = std::move(e.bottleneck);
    if (opts.enabled(cfg.depth())) {
        t0 = detail::Clock::now();
        x = detail::transform_at(cfg.depth(), x, style, opts);
        r.timing.transforms += detail::seconds_since(t0);
        ++r.transforms;
    }
    TapHook<Tensor<T>> hook = [&](std::size_t level, const Tensor<T>& f) {
        if (!opts.enabled(level)) return f;
        const auto t = detail::Clock::now();
        auto y = detail::transform_at(level, f, style, opts);
        r.timing.transforms += detail::seconds_since(t);
        ++r.transforms;
        return y;
    };
    const double before = r.timing.transforms;
    t0 = detail::Clock::now();
    auto d = decode(x, e.skips, cfg, w, hook);
    r.timing.decode = detail::seconds_since(t0) - (r.timing.transforms - before);
    detail::finish(r, content, std::move(d.image), opts);
    return r;
}

/// Multi-round baseline: for N = D..1, encode the current image to reluN_1,
/// transform, decode through blocks N..1 and feed the clamped result onward.
template <class T>
StylizeResult<T> stylize_cascade(const Tensor<T>& content, const StyleFeatures<T>& style, const ModelConfig& cfg,
                                 const BlockWeights<T>& w, const StylizeOptions& opts = {}) {
    detail::require_stylizable(cfg, w, style, opts);
    StylizeResult<T> r;
    Tensor<T> current = content;
    bool any = false;
    for (std::size_t n = cfg.depth(); n >= 1; --n) {
        if (!opts.enabled(n)) continue;
        auto t0 = detail::Clock::now();
        auto e = encode(current, cfg, w, n);
        r.timing.encode += detail::seconds_since(t0);
        t0 = detail::Clock::now();
        auto x = detail::transform_at(n, e.bottleneck, style, opts);
        r.timing.transforms += detail::seconds_since(t0);
        ++r.transforms;
        t0 = detail::Clock::now();
        current = clamp01(decode(x, e.skips, cfg, w, {}, n).image);
        r.timing.decode += detail::seconds_since(t0);
        any = true;
    }
    if (!any) {
        auto t0 = detail::Clock::now();
        auto e = encode(current, cfg, w);
        r.timing.encode = detail::seconds_since(t0);
        t0 = detail::Clock::now();
        current = decode(e.bottleneck, e.skips, cfg, w).image;
        r.timing.decode = detail::seconds_since(t0);
    }
    detail::finish(r, content, std::move(current), opts);
    return r;
}

template <class T>
StylizeResult<T> run_stylize(const Tensor<T>& content, const StyleFeatures<T>& style, const ModelConfig& cfg,
                             const BlockWeights<T>& w, const StylizeOptions& opts = {}) {
    return opts.cascade ? stylize_cascade(content, style, cfg, w, opts) : stylize(content, style, cfg, w, opts);
}

}  // namespace hfw
