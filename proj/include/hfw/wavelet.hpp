#pragma once

// Haar wavelet pooling/unpooling and the high-frequency residual split/merge.
//
// Both paths share the odd-dimension policy: a feature with odd height or
// width is replicate-padded on the bottom/right before any stride-2 op, and
// the pad is cropped away again on the way back up.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "hfw/ops.hpp"
#include "hfw/tensor.hpp"

namespace hfw {

template <class T>
struct HaarKernels {
    Kernel2x2<T> ll, lh, hl, hh;
};

template <class T>
constexpr HaarKernels<T> haar_kernels() {
    const T h = T(0.5);
    return HaarKernels<T>{
        Kernel2x2<T>{h, h, h, h},
        Kernel2x2<T>{-h, h, -h, h},
        Kernel2x2<T>{-h, -h, h, h},  // transpose of lh
        Kernel2x2<T>{h, -h, -h, h},
    };
}

template <class T>
struct WaveletComponents {
    Tensor<T> ll, lh, hl, hh;
    PadRecord pad;
};

template <class T>
WaveletComponents<T> wavelet_pool(const Tensor<T>& f) {
    const auto k = haar_kernels<T>();
    const PadRecord pad = even_pad_for(f.shape());
    const Tensor<T> fp = pad_replicate(f, pad);
    return {depthwise_conv_stride2(fp, k.ll), depthwise_conv_stride2(fp, k.lh), depthwise_conv_stride2(fp, k.hl),
            depthwise_conv_stride2(fp, k.hh), pad};
}

/// Channel concatenation [LL', LH~, HL~, HH~] with 4c channels, cropped to the
/// pre-pool size. `processed_ll` replaces the pooled LL band.
template <class T>
Tensor<T> wavelet_unpool(const WaveletComponents<T>& comp, const Tensor<T>& processed_ll) {
    require_same_shape(processed_ll.shape(), comp.ll.shape(), "wavelet_unpool processed_ll");
    require_same_shape(comp.lh.shape(), comp.ll.shape(), "wavelet_unpool lh");
    require_same_shape(comp.hl.shape(), comp.ll.shape(), "wavelet_unpool hl");
    require_same_shape(comp.hh.shape(), comp.ll.shape(), "wavelet_unpool hh");
    const auto k = haar_kernels<T>();
    const Tensor<T> parts[4] = {crop(depthwise_deconv_stride2(processed_ll, k.ll), comp.pad),
                                crop(depthwise_deconv_stride2(comp.lh, k.lh), comp.pad),
                                crop(depthwise_deconv_stride2(comp.hl, k.hl), comp.pad),
                                crop(depthwise_deconv_stride2(comp.hh, k.hh), comp.pad)};
    const Tensor<T>* ptrs[4] = {&parts[0], &parts[1], &parts[2], &parts[3]};
    return concat_channels<T>(std::span<const Tensor<T>* const>(ptrs));
}

/// Sums the `groups` consecutive channel groups of a concatenated tensor.
template <class T>
Tensor<T> sum_channel_groups(const Tensor<T>& cat, std::size_t groups) {
    if (groups == 0 || cat.c() % groups != 0)
        throw ShapeError("sum_channel_groups: " + std::to_string(cat.c()) + " channels not divisible by " +
                         std::to_string(groups));
    const std::size_t c = cat.c() / groups;
    Tensor<T> out = slice_channels(cat, 0, c);
    for (std::size_t g = 1; g < groups; ++g) add_inplace(out, slice_channels(cat, g * c, c));
    return out;
}

template <class T>
struct ResidualPair {
    Tensor<T> avg;   // (n, c, h/2, w/2) after padding
    Tensor<T> hres;  // (n, c, h, w) at the padded size
    PadRecord pad;
};

template <class T>
ResidualPair<T> hf_residual_split(const Tensor<T>& f) {
    const PadRecord pad = even_pad_for(f.shape());
    Tensor<T> fp = pad_replicate(f, pad);
    Tensor<T> avg = avg_pool_2x2(fp);
    Tensor<T> hres = fp - upsample_nearest_2x(avg);
    return {std::move(avg), std::move(hres), pad};
}

template <class T>
Tensor<T> hf_residual_merge(const Tensor<T>& decoded_low, const ResidualPair<T>& pair) {
    require_same_shape(decoded_low.shape(), pair.avg.shape(), "hf_residual_merge");
    return crop(upsample_nearest_2x(decoded_low) + pair.hres, pair.pad);
}

// ---- skip variants ----------------------------------------------------------

enum class SkipVariant : std::uint8_t { none, max_indices, wavelet_concat, hf_residual };

inline std::string_view to_string(SkipVariant v) {
    switch (v) {
        case SkipVariant::none: return "none";
        case SkipVariant::max_indices: return "max_indices";
        case SkipVariant::wavelet_concat: return "wavelet";
        case SkipVariant::hf_residual: return "hf_residual";
    }
    return "?";
}

inline std::optional<SkipVariant> parse_skip_variant(std::string_view s) {
    if (s == "none") return SkipVariant::none;
    if (s == "max_indices") return SkipVariant::max_indices;
    if (s == "wavelet" || s == "wavelet_concat") return SkipVariant::wavelet_concat;
    if (s == "hf_residual") return SkipVariant::hf_residual;
    return std::nullopt;
}

/// Channel multiplier of the merge output feeding the next decoder conv.
constexpr std::size_t merge_channel_factor(SkipVariant v) { return v == SkipVariant::wavelet_concat ? 4 : 1; }

}  // namespace hfw
