#pragma once

// Forward kernels and their adjoints for the primitive set used by the
// encoder/decoder. Every function is pure: inputs are never modified.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfw/tensor.hpp"

namespace hfw {

enum class PadMode : std::uint8_t { zero, reflect };

template <class T>
struct ConvParams {
    Tensor<T> weight;  // (out_c, in_c, k, k)
    std::vector<T> bias;
    int stride = 1;
    int padding = 0;
    PadMode pad_mode = PadMode::zero;

    [[nodiscard]] std::size_t out_c() const { return weight.n(); }
    [[nodiscard]] std::size_t in_c() const { return weight.c(); }
    [[nodiscard]] std::size_t k() const { return weight.h(); }
};

inline void validate_conv(const Shape& in, const Shape& ws, std::size_t bias_len, int stride, int padding,
                          PadMode mode) {
    if (ws.h != ws.w || ws.h < 1 || ws.h > 3)
        throw ShapeError("conv2d: kernel must be square with k in {1,2,3}, got " + ws.str());
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    if (padding < 0) throw ShapeError("conv2d: negative padding");
    if (bias_len != ws.n)
        throw ShapeError("conv2d: bias length " + std::to_string(bias_len) + " != out_c " + std::to_string(ws.n));
    if (in.c != ws.c)
        throw ShapeError("conv2d: input channels " + std::to_string(in.c) + " != weight in_c " +
                         std::to_string(ws.c));
    (void)mode;
    const auto pad = static_cast<std::size_t>(padding);
    if (in.h + 2 * pad < ws.h || in.w + 2 * pad < ws.w)
        throw ShapeError("conv2d: input " + in.str() + " smaller than kernel " + ws.str());
}

template <class T>
void validate_conv(const Shape& in, const ConvParams<T>& p) {
    validate_conv(in, p.weight.shape(), p.bias.size(), p.stride, p.padding, p.pad_mode);
}

[[nodiscard]] inline std::size_t conv_out_dim(std::size_t in, std::size_t k, int stride, int pad) {
    return (in + 2 * static_cast<std::size_t>(pad) - k) / static_cast<std::size_t>(stride) + 1;
}

namespace detail {

// Mirror without repeating the edge, folded with period 2(n-1); n == 1 maps everything to 0.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Builds the (in_c*k*k) x (ho*wo) patch matrix for one batch item.
template <class T>
void im2col(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t k, int stride, int pad,
            PadMode mode, std::size_t ho, std::size_t wo, T* col) {
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    const std::size_t P = ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        const T* plane = src + ci * h * w;
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = col + ((ci * k + ky) * k + kx) * P;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride + std::ptrdiff_t(ky) - pad;
                    bool yin = iy >= 0 && iy < H;
                    if (!yin && mode == PadMode::reflect) { iy = reflect_index(iy, H); yin = true; }
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride + std::ptrdiff_t(kx) - pad;
                        bool xin = ix >= 0 && ix < W;
                        if (!xin && mode == PadMode::reflect) { ix = reflect_index(ix, W); xin = true; }
                        row[oy * wo + ox] = (yin && xin) ? plane[iy * W + ix] : T(0);
                    }
                }
            }
    }
}

// Adjoint of im2col: scatters patch gradients back onto the input plane.
template <class T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, int stride, int pad,
            PadMode mode, std::size_t ho, std::size_t wo, T* dst) {
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    const std::size_t P = ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        T* plane = dst + ci * h * w;
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = col + ((ci * k + ky) * k + kx) * P;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride + std::ptrdiff_t(ky) - pad;
                    bool yin = iy >= 0 && iy < H;
                    if (!yin && mode == PadMode::reflect) { iy = reflect_index(iy, H); yin = true; }
                    if (!yin) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride + std::ptrdiff_t(kx) - pad;
                        bool xin = ix >= 0 && ix < W;
                        if (!xin && mode == PadMode::reflect) { ix = reflect_index(ix, W); xin = true; }
                        if (xin) plane[iy * W + ix] += row[oy * wo + ox];
                    }
                }
            }
    }
}

}  // namespace detail

/// Cross-correlation with bias; `bias` has out_c entries.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int stride, int padding,
                 PadMode mode) {
    const std::size_t k = weight.h(), O = weight.n(), C = x.c();
    const std::size_t ho = conv_out_dim(x.h(), k, stride, padding);
    const std::size_t wo = conv_out_dim(x.w(), k, stride, padding);
    const std::size_t K = C * k * k, P = ho * wo;
    Tensor<T> y(Shape{x.n(), O, ho, wo});
    Eigen::Map<const detail::RowMat<T>> Wm(weight.raw(), O, K);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bm(bias.data(), O);
    std::vector<T> col(K * P);
    for (std::size_t b = 0; b < x.n(); ++b) {
        const T* src = x.plane(b, 0);
        if (k == 1 && stride == 1 && padding == 0) {
            Eigen::Map<const detail::RowMat<T>> Cm(src, K, P);
            Eigen::Map<detail::RowMat<T>> Ym(y.plane(b, 0), O, P);
            Ym.noalias() = Wm * Cm;
            Ym.colwise() += bm;
            continue;
        }
        detail::im2col(src, C, x.h(), x.w(), k, stride, padding, mode, ho, wo, col.data());
        Eigen::Map<const detail::RowMat<T>> Cm(col.data(), K, P);
        Eigen::Map<detail::RowMat<T>> Ym(y.plane(b, 0), O, P);
        Ym.noalias() = Wm * Cm;
        Ym.colwise() += bm;
    }
    return y;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
    validate_conv(x.shape(), p);
    return conv2d(x, p.weight, std::span<const T>(p.bias), p.stride, p.padding, p.pad_mode);
}

/// Gradients of conv2d. Null outputs are skipped; dw/db accumulate.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, int padding, PadMode mode,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dw, std::vector<T>* db) {
    const std::size_t k = weight.h(), O = weight.n(), C = x.c();
    const std::size_t ho = dy.h(), wo = dy.w();
    const std::size_t K = C * k * k, P = ho * wo;
    const bool pointwise = k == 1 && stride == 1 && padding == 0;
    Eigen::Map<const detail::RowMat<T>> Wm(weight.raw(), O, K);
    std::vector<T> col(pointwise ? 0 : K * P);
    if (dx) *dx = Tensor<T>(x.shape());
    if (dw && dw->shape() != weight.shape()) *dw = Tensor<T>(weight.shape());
    if (db && db->size() != O) db->assign(O, T(0));
    for (std::size_t b = 0; b < x.n(); ++b) {
        Eigen::Map<const detail::RowMat<T>> dYm(dy.plane(b, 0), O, P);
        if (dw) {
            const T* cp = x.plane(b, 0);
            if (!pointwise) {
                detail::im2col(x.plane(b, 0), C, x.h(), x.w(), k, stride, padding, mode, ho, wo, col.data());
                cp = col.data();
            }
            Eigen::Map<const detail::RowMat<T>> Cm(cp, K, P);
            Eigen::Map<detail::RowMat<T>> dWm(dw->raw(), O, K);
            dWm.noalias() += dYm * Cm.transpose();
        }
        if (db) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dbm(db->data(), O);
            dbm += dYm.rowwise().sum();
        }
        if (dx) {
            if (pointwise) {
                Eigen::Map<detail::RowMat<T>> dXm(dx->plane(b, 0), K, P);
                dXm.noalias() = Wm.transpose() * dYm;
                continue;
            }
            Eigen::Map<detail::RowMat<T>> dCm(col.data(), K, P);
            dCm.noalias() = Wm.transpose() * dYm;
            detail::col2im(col.data(), C, x.h(), x.w(), k, stride, padding, mode, ho, wo, dx->plane(b, 0));
        }
    }
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, std::vector<T>* db) {
    conv2d_backward(x, p.weight, p.stride, p.padding, p.pad_mode, dy, dx, dw, db);
}

// ---- 2x2 stride-2 depthwise ----------------------------------------------

/// Row-major 2x2 kernel {k00, k01, k10, k11}.
template <class T>
using Kernel2x2 = std::array<T, 4>;

inline void require_even(const Shape& s, const char* what) {
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw ShapeError(std::string(what) + ": spatial dims must be even, got " + s.str() +
                         " (apply the odd-dimension padding policy first)");
}

/// Stride-2 depthwise convolution; `kernels` holds one kernel (broadcast) or one per channel.
template <class T>
Tensor<T> depthwise_conv_stride2(const Tensor<T>& x, std::span<const Kernel2x2<T>> kernels) {
    require_even(x.shape(), "depthwise_conv_stride2");
    if (kernels.size() != 1 && kernels.size() != x.c())
        throw ShapeError("depthwise_conv_stride2: expected 1 or " + std::to_string(x.c()) + " kernels, got " +
                         std::to_string(kernels.size()));
    const std::size_t ho = x.h() / 2, wo = x.w() / 2, W = x.w();
    Tensor<T> y(Shape{x.n(), x.c(), ho, wo});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto& k = kernels.size() == 1 ? kernels[0] : kernels[c];
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    const T* p = s + 2 * i * W + 2 * j;
                    d[i * wo + j] = k[0] * p[0] + k[1] * p[1] + k[2] * p[W] + k[3] * p[W + 1];
                }
        }
    return y;
}

template <class T>
Tensor<T> depthwise_conv_stride2(const Tensor<T>& x, const Kernel2x2<T>& k) {
    return depthwise_conv_stride2(x, std::span<const Kernel2x2<T>>(&k, 1));
}

/// Transpose of depthwise_conv_stride2.
template <class T>
Tensor<T> depthwise_deconv_stride2(const Tensor<T>& x, std::span<const Kernel2x2<T>> kernels) {
    if (kernels.size() != 1 && kernels.size() != x.c())
        throw ShapeError("depthwise_deconv_stride2: expected 1 or " + std::to_string(x.c()) + " kernels, got " +
                         std::to_string(kernels.size()));
    const std::size_t h = x.h(), w = x.w(), W = 2 * w;
    Tensor<T> y(Shape{x.n(), x.c(), 2 * h, 2 * w});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto& k = kernels.size() == 1 ? kernels[0] : kernels[c];
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const T v = s[i * w + j];
                    T* p = d + 2 * i * W + 2 * j;
                    p[0] = k[0] * v;
                    p[1] = k[1] * v;
                    p[W] = k[2] * v;
                    p[W + 1] = k[3] * v;
                }
        }
    return y;
}

template <class T>
Tensor<T> depthwise_deconv_stride2(const Tensor<T>& x, const Kernel2x2<T>& k) {
    return depthwise_deconv_stride2(x, std::span<const Kernel2x2<T>>(&k, 1));
}

// ---- pointwise / pooling ---------------------------------------------------

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

template <class T>
Tensor<T> avg_pool_2x2(const Tensor<T>& x) {
    require_even(x.shape(), "avg_pool_2x2");
    const std::size_t ho = x.h() / 2, wo = x.w() / 2, W = x.w();
    Tensor<T> y(Shape{x.n(), x.c(), ho, wo});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    const T* p = s + 2 * i * W + 2 * j;
                    d[i * wo + j] = (p[0] + p[1] + p[W] + p[W + 1]) * T(0.25);
                }
        }
    return y;
}

/// Each value replicated into a 2x2 block, scaled by `scale`.
template <class T>
Tensor<T> upsample_nearest_2x(const Tensor<T>& x, T scale = T(1)) {
    const std::size_t h = x.h(), w = x.w(), W = 2 * w;
    Tensor<T> y(Shape{x.n(), x.c(), 2 * h, 2 * w});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const T v = s[i * w + j] * scale;
                    T* p = d + 2 * i * W + 2 * j;
                    p[0] = p[1] = p[W] = p[W + 1] = v;
                }
        }
    return y;
}

/// Sum over disjoint 2x2 blocks (adjoint of upsample_nearest_2x).
template <class T>
Tensor<T> sum_pool_2x2(const Tensor<T>& x) {
    Tensor<T> y = avg_pool_2x2(x);
    for (auto& v : y.data()) v *= T(4);
    return y;
}

/// Argmax position inside each 2x2 block (0..3, row-major), first maximum wins.
struct IndexMap {
    Shape pooled_shape;
    std::vector<std::uint8_t> pos;
};

template <class T>
std::pair<Tensor<T>, IndexMap> max_pool_2x2_with_indices(const Tensor<T>& x) {
    require_even(x.shape(), "max_pool_2x2");
    const std::size_t ho = x.h() / 2, wo = x.w() / 2, W = x.w();
    Tensor<T> y(Shape{x.n(), x.c(), ho, wo});
    IndexMap idx{y.shape(), std::vector<std::uint8_t>(y.numel())};
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            std::uint8_t* ip = idx.pos.data() + (b * x.c() + c) * ho * wo;
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    const T* p = s + 2 * i * W + 2 * j;
                    const T cand[4] = {p[0], p[1], p[W], p[W + 1]};
                    std::uint8_t best = 0;
                    for (std::uint8_t q = 1; q < 4; ++q)
                        if (cand[q] > cand[best]) best = q;
                    d[i * wo + j] = cand[best];
                    ip[i * wo + j] = best;
                }
        }
    return {std::move(y), std::move(idx)};
}

template <class T>
Tensor<T> max_unpool_2x2(const Tensor<T>& x, const IndexMap& idx) {
    if (x.shape() != idx.pooled_shape)
        throw ShapeError("max_unpool_2x2: index map shape " + idx.pooled_shape.str() + " vs input " +
                         x.shape().str());
    const std::size_t h = x.h(), w = x.w(), W = 2 * w;
    Tensor<T> y(Shape{x.n(), x.c(), 2 * h, 2 * w});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            const std::uint8_t* ip = idx.pos.data() + (b * x.c() + c) * h * w;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const std::uint8_t q = ip[i * w + j];
                    d[(2 * i + q / 2) * W + 2 * j + q % 2] = s[i * w + j];
                }
        }
    return y;
}

/// Adjoint of max_unpool_2x2: gathers the recorded positions.
template <class T>
Tensor<T> max_gather_2x2(const Tensor<T>& x, const IndexMap& idx) {
    const std::size_t h = idx.pooled_shape.h, w = idx.pooled_shape.w, W = x.w();
    if (x.h() != 2 * h || x.w() != 2 * w || x.c() != idx.pooled_shape.c || x.n() != idx.pooled_shape.n)
        throw ShapeError("max_gather_2x2: input " + x.shape().str() + " vs index map " + idx.pooled_shape.str());
    Tensor<T> y(idx.pooled_shape);
    for (std::size_t b = 0; b < y.n(); ++b)
        for (std::size_t c = 0; c < y.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            const std::uint8_t* ip = idx.pos.data() + (b * y.c() + c) * h * w;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const std::uint8_t q = ip[i * w + j];
                    d[i * w + j] = s[(2 * i + q / 2) * W + 2 * j + q % 2];
                }
        }
    return y;
}

// ---- odd-dimension padding policy -----------------------------------------

/// Extra rows/columns appended to reach even spatial dims.
struct PadRecord {
    std::uint8_t bottom = 0;
    std::uint8_t right = 0;
    [[nodiscard]] bool empty() const { return bottom == 0 && right == 0; }
    bool operator==(const PadRecord&) const = default;
};

[[nodiscard]] inline PadRecord even_pad_for(const Shape& s) {
    return PadRecord{static_cast<std::uint8_t>(s.h % 2), static_cast<std::uint8_t>(s.w % 2)};
}

/// Replicates the last row/column per `pad`.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& x, PadRecord pad) {
    if (pad.empty()) return x;
    const std::size_t H = x.h() + pad.bottom, W = x.w() + pad.right;
    Tensor<T> y(Shape{x.n(), x.c(), H, W});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* s = x.plane(b, c);
            T* d = y.plane(b, c);
            for (std::size_t i = 0; i < H; ++i) {
                const std::size_t si = std::min(i, x.h() - 1);
                for (std::size_t j = 0; j < W; ++j) d[i * W + j] = s[si * x.w() + std::min(j, x.w() - 1)];
            }
        }
    return y;
}

/// Adjoint of pad_replicate: folds the replicated border back onto its source.
template <class T>
Tensor<T> pad_replicate_backward(const Tensor<T>& dy, PadRecord pad) {
    if (pad.empty()) return dy;
    const std::size_t h = dy.h() - pad.bottom, w = dy.w() - pad.right, W = dy.w();
    Tensor<T> dx(Shape{dy.n(), dy.c(), h, w});
    for (std::size_t b = 0; b < dy.n(); ++b)
        for (std::size_t c = 0; c < dy.c(); ++c) {
            const T* s = dy.plane(b, c);
            T* d = dx.plane(b, c);
            for (std::size_t i = 0; i < dy.h(); ++i)
                for (std::size_t j = 0; j < W; ++j) d[std::min(i, h - 1) * w + std::min(j, w - 1)] += s[i * W + j];
        }
    return dx;
}

/// Removes `pad` rows/columns from the bottom/right.
template <class T>
Tensor<T> crop(const Tensor<T>& x, PadRecord pad) {
    if (pad.empty()) return x;
    if (x.h() <= pad.bottom || x.w() <= pad.right) throw ShapeError("crop: tensor too small " + x.shape().str());
    const std::size_t h = x.h() - pad.bottom, w = x.w() - pad.right;
    Tensor<T> y(Shape{x.n(), x.c(), h, w});
    for (std::size_t b = 0; b < x.n(); ++b)
        for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t i = 0; i < h; ++i) std::copy_n(x.plane(b, c) + i * x.w(), w, y.plane(b, c) + i * w);
    return y;
}

/// Adjoint of crop: zero-extends.
template <class T>
Tensor<T> crop_backward(const Tensor<T>& dy, PadRecord pad) {
    if (pad.empty()) return dy;
    const std::size_t H = dy.h() + pad.bottom, W = dy.w() + pad.right;
    Tensor<T> dx(Shape{dy.n(), dy.c(), H, W});
    for (std::size_t b = 0; b < dy.n(); ++b)
        for (std::size_t c = 0; c < dy.c(); ++c)
            for (std::size_t i = 0; i < dy.h(); ++i)
                std::copy_n(dy.plane(b, c) + i * dy.w(), dy.w(), dx.plane(b, c) + i * W);
    return dx;
}

}  // namespace hfw
