#pragma once

// The blockwise autoencoder: encoder blocks 1..D ending at reluN_1, mirrored
// decoder blocks D..1, and the per-variant skip payloads that link each
// pooling site to its unpooling counterpart.
//
// The forward code is written once against an "executor" so that the same
// block definitions run eagerly on tensors (inference) or record onto an
// autodiff tape (training).

#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hfw/autodiff.hpp"
#include "hfw/ops.hpp"
#include "hfw/tensor.hpp"
#include "hfw/wavelet.hpp"

namespace hfw {

enum class Preset : std::uint8_t { vgg19, tiny, custom };

inline std::string_view to_string(Preset p) {
    switch (p) {
        case Preset::vgg19: return "vgg19";
        case Preset::tiny: return "tiny";
        case Preset::custom: return "custom";
    }
    return "?";
}

inline std::optional<Preset> parse_preset(std::string_view s) {
    if (s == "vgg19") return Preset::vgg19;
    if (s == "tiny") return Preset::tiny;
    if (s == "custom") return Preset::custom;
    return std::nullopt;
}

struct ConvSpec {
    std::size_t in_c = 0, out_c = 0;
    std::size_t k = 3;
    bool relu = true;
    bool operator==(const ConvSpec&) const = default;
};

struct ModelConfig {
    Preset preset = Preset::tiny;
    std::size_t in_channels = 3;
    /// reluN_1 width per block, N = 1..D.
    std::vector<std::size_t> widths{8, 16, 32, 64};
    /// Number of same-width convs before the pool of block N (index 0 unused).
    std::vector<std::size_t> pre_pool_convs{0, 1, 1, 1};
    SkipVariant skip = SkipVariant::hf_residual;
    bool single_precision = false;

    [[nodiscard]] std::size_t depth() const { return widths.size(); }
    bool operator==(const ModelConfig&) const = default;

    [[nodiscard]] std::size_t width(std::size_t level) const {
        if (level == 0) return in_channels;
        return widths.at(level - 1);
    }

    static ModelConfig vgg19(std::size_t depth = 4) {
        ModelConfig c;
        c.preset = Preset::vgg19;
        c.widths = {64, 128, 256, 512};
        c.pre_pool_convs = {0, 1, 1, 3};
        c.widths.resize(depth);
        c.pre_pool_convs.resize(depth);
        c.validate();
        return c;
    }

    static ModelConfig tiny(std::size_t depth = 4) {
        ModelConfig c;
        c.preset = Preset::tiny;
        c.widths = {8, 16, 32, 64};
        c.pre_pool_convs = {0, 1, 1, 1};
        c.widths.resize(depth);
        c.pre_pool_convs.resize(depth);
        c.validate();
        return c;
    }

    void validate() const {
        if (depth() != 3 && depth() != 4) throw std::invalid_argument("ModelConfig: depth must be 3 or 4");
        if (pre_pool_convs.size() != depth())
            throw std::invalid_argument("ModelConfig: pre_pool_convs must have one entry per block");
        for (std::size_t n = 1; n < depth(); ++n)
            if (pre_pool_convs[n] < 1) throw std::invalid_argument("ModelConfig: pooled blocks need >= 1 pre-pool conv");
        for (auto w : widths)
            if (w == 0) throw std::invalid_argument("ModelConfig: zero width");
        if (in_channels == 0) throw std::invalid_argument("ModelConfig: zero input channels");
    }
};

/// Encoder convs of block `level` (1-based). Block D+1 is the metric-only
/// extension that produces relu(D+1)_1 at the same width as reluD_1.
inline std::vector<ConvSpec> encoder_convs(const ModelConfig& cfg, std::size_t level) {
    if (level == 1) return {ConvSpec{cfg.in_channels, cfg.widths[0]}};
    const bool extension = level == cfg.depth() + 1;
    const std::size_t prev = cfg.width(level - 1);
    const std::size_t out = extension ? prev : cfg.width(level);
    const std::size_t reps = extension ? cfg.pre_pool_convs.back() : cfg.pre_pool_convs.at(level - 1);
    std::vector<ConvSpec> v(reps, ConvSpec{prev, prev});
    v.push_back(ConvSpec{prev, out});
    return v;
}

/// Decoder convs of block `level`, in execution order. The first conv runs
/// before the unpooling merge.
inline std::vector<ConvSpec> decoder_convs(const ModelConfig& cfg, std::size_t level) {
    if (level == 1) return {ConvSpec{cfg.widths[0], cfg.in_channels, 3, false}};
    const std::size_t prev = cfg.width(level - 1);
    const std::size_t reps = cfg.pre_pool_convs.at(level - 1);
    std::vector<ConvSpec> v{ConvSpec{cfg.width(level), prev}};
    for (std::size_t r = 0; r < reps; ++r) {
        const std::size_t in = r == 0 ? prev * merge_channel_factor(cfg.skip) : prev;
        v.push_back(ConvSpec{in, prev});
    }
    return v;
}

struct ParamCount {
    std::size_t total = 0;
    std::size_t mainstream_layers = 0;
};

/// Weights + biases of encoder and decoder, and the conv/pool/upsample layer
/// count along the main path (skip branches excluded).
inline ParamCount count_parameters(const ModelConfig& cfg) {
    cfg.validate();
    ParamCount pc;
    auto add = [&](const std::vector<ConvSpec>& convs) {
        for (const auto& c : convs) pc.total += c.out_c * c.in_c * c.k * c.k + c.out_c;
        pc.mainstream_layers += convs.size();
    };
    for (std::size_t n = 1; n <= cfg.depth(); ++n) {
        add(encoder_convs(cfg, n));
        add(decoder_convs(cfg, n));
        if (n >= 2) pc.mainstream_layers += 2;  // pool + unpool
    }
    return pc;
}

template <class T>
ConvParams<T> make_conv(const ConvSpec& s) {
    return ConvParams<T>{Tensor<T>(Shape{s.out_c, s.in_c, s.k, s.k}), std::vector<T>(s.out_c, T(0)), 1,
                         static_cast<int>(s.k / 2), PadMode::reflect};
}

/// Encoder (frozen) and decoder (trainable) parameters, one vector of convs per block.
template <class T>
struct BlockWeights {
    std::vector<std::vector<ConvParams<T>>> encoder;  // [level-1][i]
    std::vector<std::vector<ConvParams<T>>> decoder;  // [level-1][i]
    std::vector<bool> decoder_trained;
    /// Optional relu(D+1)_1 extension used by the style metrics only.
    std::vector<ConvParams<T>> metric_block;

    [[nodiscard]] bool fully_trained() const {
        return !decoder_trained.empty() &&
               std::all_of(decoder_trained.begin(), decoder_trained.end(), [](bool b) { return b; });
    }
};


namespace detail {

// Rows (or columns) orthonormal, then scaled.
template <class T>
void orthogonal_fill(Tensor<T>& w, std::mt19937_64& rng, double gain) {
    const auto rows = static_cast<Eigen::Index>(w.n());
    const auto cols = static_cast<Eigen::Index>(w.c() * w.h() * w.w());
    std::normal_distribution<double> nd(0.0, 1.0);
    const bool tall = rows > cols;
    Eigen::MatrixXd a(tall ? rows : cols, tall ? cols : rows);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    // Fix column signs so the draw is a deterministic function of the seed.
    Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).template triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            w[static_cast<std::size_t>(i * cols + j)] = static_cast<T>(gain * (tall ? q(i, j) : q(j, i)));
}

}  // namespace detail

/// Seeded encoder conv. The filter bank is Q = sqrt(c)·Q_mid + sqrt(1-c)·Q_full
/// with Q_mid an orthogonal centre tap and Q_full an orthogonal full kernel.
/// Output rows come in ± pairs (relu(z), relu(-z)); when `paired_input` the
/// input channels are read the same way, so every block computes relu(±L·x)
/// for a linear L of the previous block's linear part. Zero bias.
template <class T>
ConvParams<T> init_encoder_conv(const ConvSpec& s, std::mt19937_64& rng, bool paired_input,
                                double center = 1.0) {
    ConvParams<T> p = make_conv<T>(s);
    const bool pair_out = s.out_c % 2 == 0;
    const bool pair_in = paired_input && s.in_c % 2 == 0;
    const std::size_t rows = pair_out ? s.out_c / 2 : s.out_c;
    const std::size_t cols = pair_in ? s.in_c / 2 : s.in_c;
    Tensor<T> full(Shape{rows, cols, s.k, s.k});
    detail::orthogonal_fill(full, rng, 1.0);
    Tensor<T> mid(Shape{rows, cols, 1, 1});
    detail::orthogonal_fill(mid, rng, 1.0);
    const std::size_t taps = s.k * s.k, c0 = taps / 2;
    const double a = std::sqrt(center), b = std::sqrt(1.0 - center);
    for (std::size_t o = 0; o < s.out_c; ++o)
        for (std::size_t i = 0; i < s.in_c; ++i) {
            const std::size_t ro = o % rows, ci = i % cols;
            const double sign = (o >= rows ? -1.0 : 1.0) * (pair_in && i >= cols ? -1.0 : 1.0);
            for (std::size_t t = 0; t < taps; ++t) {
                const double m = t == c0 ? double(mid[ro * cols + ci]) : 0.0;
                const double v = a * m + b * double(full[(ro * cols + ci) * taps + t]);
                p.weight[(o * s.in_c + i) * taps + t] = static_cast<T>(sign * v);
            }
        }
    return p;
}

/// Seeded decoder: uniform in ±sqrt(6/fan_in) (±sqrt(3/fan_in) for the linear output conv), zero bias.
template <class T>
ConvParams<T> init_decoder_conv(const ConvSpec& s, std::mt19937_64& rng) {
    ConvParams<T> p = make_conv<T>(s);
    const double fan_in = double(s.in_c * s.k * s.k);
    const double bound = std::sqrt((s.relu ? 6.0 : 3.0) / fan_in);
    std::uniform_real_distribution<double> ud(-bound, bound);
    for (auto& v : p.weight.data()) v = static_cast<T>(ud(rng));
    return p;
}

template <class T>
BlockWeights<T> init_weights(const ModelConfig& cfg, std::uint64_t seed, bool with_metric_block = false) {
    cfg.validate();
    BlockWeights<T> w;
    std::mt19937_64 enc_rng(seed * 2654435761ULL + 17);
    std::mt19937_64 dec_rng(seed * 2654435761ULL + 29);
    for (std::size_t n = 1; n <= cfg.depth(); ++n) {
        auto& eb = w.encoder.emplace_back();
        for (const auto& s : encoder_convs(cfg, n)) eb.push_back(init_encoder_conv<T>(s, enc_rng, !(n == 1)));
        auto& db = w.decoder.emplace_back();
        for (const auto& s : decoder_convs(cfg, n)) db.push_back(init_decoder_conv<T>(s, dec_rng));
    }
    w.decoder_trained.assign(cfg.depth(), false);
    if (with_metric_block) {
        std::mt19937_64 ext_rng(seed * 2654435761ULL + 43);
        for (const auto& s : encoder_convs(cfg, cfg.depth() + 1)) w.metric_block.push_back(init_encoder_conv<T>(s, ext_rng, true));
    }
    return w;
}

/// Throws when the weight shapes disagree with the config; names the tensor.
/// Correctly shaped all-zero weights.
template <class T>
BlockWeights<T> zero_weights(const ModelConfig& cfg, bool with_metric_block = false) {
    cfg.validate();
    BlockWeights<T> w;
    for (std::size_t n = 1; n <= cfg.depth(); ++n) {
        auto& eb = w.encoder.emplace_back();
        for (const auto& s : encoder_convs(cfg, n)) eb.push_back(make_conv<T>(s));
        auto& db = w.decoder.emplace_back();
        for (const auto& s : decoder_convs(cfg, n)) db.push_back(make_conv<T>(s));
    }
    w.decoder_trained.assign(cfg.depth(), false);
    if (with_metric_block)
        for (const auto& s : encoder_convs(cfg, cfg.depth() + 1)) w.metric_block.push_back(make_conv<T>(s));
    return w;
}

template <class T>
void check_weights(const ModelConfig& cfg, const BlockWeights<T>& w) {
    auto check = [](const std::vector<ConvSpec>& specs, const std::vector<ConvParams<T>>& got, const std::string& tag) {
        if (specs.size() != got.size())
            throw ShapeError(tag + ": expected " + std::to_string(specs.size()) + " convs, got " +
                             std::to_string(got.size()));
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            const Shape want{s.out_c, s.in_c, s.k, s.k};
            if (got[i].weight.shape() != want || got[i].bias.size() != s.out_c)
                throw ShapeError(tag + "." + std::to_string(i) + ": weight shape " + got[i].weight.shape().str() +
                                 " does not match config " + want.str());
        }
    };
    if (w.encoder.size() != cfg.depth() || w.decoder.size() != cfg.depth())
        throw ShapeError("weights: block count does not match config depth " + std::to_string(cfg.depth()));
    for (std::size_t n = 1; n <= cfg.depth(); ++n) {
        check(encoder_convs(cfg, n), w.encoder[n - 1], "enc" + std::to_string(n));
        check(decoder_convs(cfg, n), w.decoder[n - 1], "dec" + std::to_string(n));
    }
    if (!w.metric_block.empty()) check(encoder_convs(cfg, cfg.depth() + 1), w.metric_block, "enc_metric");
}

// ---- skip payloads -------------------------------------------------------------

/// Payload captured at one pooling site. Handle type H is a tensor (eager)
/// or a tape node id (training).
template <class H>
struct SkipPayload {
    SkipVariant variant = SkipVariant::none;
    PadRecord pad;
    std::vector<H> bands;  // hf_residual: {hres}; wavelet: {lh, hl, hh}; otherwise empty
    IndexMap indices;      // max_indices only
};

/// One payload per pooling site, keyed by level (2..D).
template <class H>
struct SkipBundle {
    std::map<std::size_t, SkipPayload<H>> levels;

    [[nodiscard]] const SkipPayload<H>& at(std::size_t level, SkipVariant expected) const {
        auto it = levels.find(level);
        if (it == levels.end())
            throw std::invalid_argument("decode: missing skip payload for level " + std::to_string(level));
        if (it->second.variant != expected)
            throw std::invalid_argument("decode: skip payload at level " + std::to_string(level) + " is " +
                                        std::string(to_string(it->second.variant)) + ", config expects " +
                                        std::string(to_string(expected)));
        return it->second;
    }
};

/// reluN_1 features (or their reproduced counterparts), index N-1.
template <class H>
struct FeatureTaps {
    std::vector<H> features;
};

// ---- executors --------------------------------------------------------------

template <class T>
class EagerExec {
public:
    using Handle = Tensor<T>;

    explicit EagerExec(const BlockWeights<T>& w) : w_(&w) {}

    Handle enc_conv(const Handle& x, std::size_t level, std::size_t i) {
        return conv2d(x, conv_ref(w_->encoder, level, i));
    }
    Handle dec_conv(const Handle& x, std::size_t level, std::size_t i) {
        return conv2d(x, conv_ref(w_->decoder, level, i));
    }
    Handle metric_conv(const Handle& x, std::size_t i) { return conv2d(x, w_->metric_block.at(i)); }
    Handle relu(const Handle& x) { return hfw::relu(x); }
    Handle avg_pool(const Handle& x) { return avg_pool_2x2(x); }
    Handle upsample(const Handle& x) { return upsample_nearest_2x(x); }
    std::pair<Handle, IndexMap> max_pool(const Handle& x) { return max_pool_2x2_with_indices(x); }
    Handle max_unpool(const Handle& x, const IndexMap& idx) { return max_unpool_2x2(x, idx); }
    Handle dw_conv2(const Handle& x, const Kernel2x2<T>& k) { return depthwise_conv_stride2(x, k); }
    Handle dw_deconv2(const Handle& x, const Kernel2x2<T>& k) { return depthwise_deconv_stride2(x, k); }
    Handle add(const Handle& a, const Handle& b) { return a + b; }
    Handle sub(const Handle& a, const Handle& b) { return a - b; }
    Handle concat(const std::vector<Handle>& xs) {
        std::vector<const Tensor<T>*> p;
        for (const auto& x : xs) p.push_back(&x);
        return concat_channels<T>(std::span<const Tensor<T>* const>(p));
    }
    Handle pad_even(const Handle& x, PadRecord pad) { return pad_replicate(x, pad); }
    Handle crop(const Handle& x, PadRecord pad) { return hfw::crop(x, pad); }
    const Tensor<T>& value(const Handle& x) const { return x; }

private:
    const BlockWeights<T>* w_;

    static const ConvParams<T>& conv_ref(const std::vector<std::vector<ConvParams<T>>>& blocks, std::size_t level,
                                         std::size_t i) {
        return blocks.at(level - 1).at(i);
    }
};

/// Records onto a tape. Encoder weights enter as frozen leaves; decoder block
/// N enters as trainable iff `trainable_blocks[N-1]`.
template <class T>
class TapeExec {
public:
    using Handle = ad::NodeId;

    TapeExec(ad::Tape<T>& tape, const BlockWeights<T>& w, std::vector<bool> trainable_blocks)
        : tape_(&tape), w_(&w), trainable_(std::move(trainable_blocks)) {}

    Handle enc_conv(Handle x, std::size_t level, std::size_t i) {
        const auto [wn, bn] = leaf(enc_leaves_, w_->encoder, level, i, false);
        const auto& p = w_->encoder[level - 1][i];
        return tape_->conv2d(x, wn, bn, p.stride, p.padding, p.pad_mode);
    }
    Handle dec_conv(Handle x, std::size_t level, std::size_t i) {
        const bool train = level - 1 < trainable_.size() && trainable_[level - 1];
        const auto [wn, bn] = leaf(dec_leaves_, w_->decoder, level, i, train);
        const auto& p = w_->decoder[level - 1][i];
        return tape_->conv2d(x, wn, bn, p.stride, p.padding, p.pad_mode);
    }
    Handle relu(Handle x) { return tape_->relu(x); }
    Handle avg_pool(Handle x) { return tape_->avg_pool(x); }
    Handle upsample(Handle x) { return tape_->upsample(x); }
    std::pair<Handle, IndexMap> max_pool(Handle x) {
        auto y = tape_->max_pool(x);
        return {y, tape_->indices(y)};
    }
    Handle max_unpool(Handle x, const IndexMap& idx) { return tape_->max_unpool(x, idx); }
    Handle dw_conv2(Handle x, const Kernel2x2<T>& k) { return tape_->dw_conv2(x, {k}); }
    Handle dw_deconv2(Handle x, const Kernel2x2<T>& k) { return tape_->dw_deconv2(x, {k}); }
    Handle add(Handle a, Handle b) { return tape_->add(a, b); }
    Handle sub(Handle a, Handle b) { return tape_->sub(a, b); }
    Handle concat(const std::vector<Handle>& xs) { return tape_->concat(xs); }
    Handle pad_even(Handle x, PadRecord pad) { return pad.empty() ? x : tape_->pad_even(x, pad); }
    Handle crop(Handle x, PadRecord pad) { return pad.empty() ? x : tape_->crop(x, pad); }
    const Tensor<T>& value(Handle x) const { return tape_->value(x); }

    ad::Tape<T>& tape() { return *tape_; }

    /// Trainable decoder leaves created so far: (level, conv index) -> (weight node, bias node).
    [[nodiscard]] const std::map<std::pair<std::size_t, std::size_t>, std::pair<Handle, Handle>>& decoder_leaves() const {
        return dec_leaves_;
    }

private:
    using LeafMap = std::map<std::pair<std::size_t, std::size_t>, std::pair<Handle, Handle>>;
    ad::Tape<T>* tape_;
    const BlockWeights<T>* w_;
    std::vector<bool> trainable_;
    LeafMap enc_leaves_, dec_leaves_;

    std::pair<Handle, Handle> leaf(LeafMap& cache, const std::vector<std::vector<ConvParams<T>>>& blocks,
                                   std::size_t level, std::size_t i, bool train) {
        auto key = std::make_pair(level, i);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        const auto& p = blocks.at(level - 1).at(i);
        Tensor<T> b(Shape{1, p.bias.size(), 1, 1}, p.bias);
        std::pair<Handle, Handle> ids = train ? std::make_pair(tape_->trainable(p.weight), tape_->trainable(std::move(b)))
                                              : std::make_pair(tape_->frozen(p.weight), tape_->frozen(std::move(b)));
        cache.emplace(key, ids);
        return ids;
    }
};

// ---- blocks -------------------------------------------------------------------

/// Encoder block `level`; captures the pooling-site payload into `skip` when
/// the block pools (level >= 2).
template <class Exec>
typename Exec::Handle encode_block(Exec& ex, const ModelConfig& cfg, std::size_t level, typename Exec::Handle x,
                                   SkipPayload<typename Exec::Handle>* skip) {
    using H = typename Exec::Handle;
    using T = typename std::decay_t<decltype(ex.value(x))>::value_type;
    const auto convs = encoder_convs(cfg, level);
    if (level == 1) return ex.relu(ex.enc_conv(x, 1, 0));
    for (std::size_t i = 0; i + 1 < convs.size(); ++i) x = ex.relu(ex.enc_conv(x, level, i));
    SkipPayload<H> payload;
    payload.variant = cfg.skip;
    payload.pad = even_pad_for(ex.value(x).shape());
    x = ex.pad_even(x, payload.pad);
    H low;
    switch (cfg.skip) {
        case SkipVariant::none: low = ex.avg_pool(x); break;
        case SkipVariant::max_indices: {
            auto [y, idx] = ex.max_pool(x);
            low = y;
            payload.indices = std::move(idx);
            break;
        }
        case SkipVariant::wavelet_concat: {
            const auto k = haar_kernels<T>();
            low = ex.dw_conv2(x, k.ll);
            payload.bands = {ex.dw_conv2(x, k.lh), ex.dw_conv2(x, k.hl), ex.dw_conv2(x, k.hh)};
            break;
        }
        case SkipVariant::hf_residual: {
            low = ex.avg_pool(x);
            payload.bands = {ex.sub(x, ex.upsample(low))};
            break;
        }
    }
    if (skip) *skip = std::move(payload);
    return ex.relu(ex.enc_conv(low, level, convs.size() - 1));
}

/// Decoder block `level`: maps a reluN_1-like feature to relu(N-1)_1 (or the
/// image for level 1, without a final relu).
template <class Exec>
typename Exec::Handle decode_block(Exec& ex, const ModelConfig& cfg, std::size_t level, typename Exec::Handle x,
                                   const SkipBundle<typename Exec::Handle>& skips) {
    using H = typename Exec::Handle;
    using T = typename std::decay_t<decltype(ex.value(x))>::value_type;
    const auto convs = decoder_convs(cfg, level);
    if (level == 1) return ex.dec_conv(x, 1, 0);
    const auto& payload = skips.at(level, cfg.skip);
    x = ex.relu(ex.dec_conv(x, level, 0));
    switch (cfg.skip) {
        case SkipVariant::none: x = ex.upsample(x); break;
        case SkipVariant::max_indices: x = ex.max_unpool(x, payload.indices); break;
        case SkipVariant::wavelet_concat: {
            const auto k = haar_kernels<T>();
            if (payload.bands.size() != 3) throw std::invalid_argument("decode: wavelet payload needs 3 bands");
            x = ex.concat(std::vector<H>{ex.dw_deconv2(x, k.ll), ex.dw_deconv2(payload.bands[0], k.lh),
                                         ex.dw_deconv2(payload.bands[1], k.hl), ex.dw_deconv2(payload.bands[2], k.hh)});
            break;
        }
        case SkipVariant::hf_residual:
            if (payload.bands.size() != 1) throw std::invalid_argument("decode: hf_residual payload needs 1 band");
            x = ex.add(ex.upsample(x), payload.bands[0]);
            break;
    }
    x = ex.crop(x, payload.pad);
    for (std::size_t i = 1; i < convs.size(); ++i) x = ex.relu(ex.dec_conv(x, level, i));
    return x;
}

/// Runs encoder blocks 1..upto; taps[N-1] = reluN_1.
template <class Exec>
typename Exec::Handle encode_upto(Exec& ex, const ModelConfig& cfg, typename Exec::Handle image, std::size_t upto,
                                  FeatureTaps<typename Exec::Handle>* taps, SkipBundle<typename Exec::Handle>* skips) {
    auto x = image;
    for (std::size_t n = 1; n <= upto; ++n) {
        SkipPayload<typename Exec::Handle> payload;
        x = encode_block(ex, cfg, n, x, n >= 2 ? &payload : nullptr);
        if (n >= 2 && skips) skips->levels[n] = std::move(payload);
        if (taps) taps->features.push_back(x);
    }
    return x;
}

/// Hook applied to the reproduced relu(level)_1 feature before it enters the next block.
template <class H>
using TapHook = std::function<H(std::size_t level, const H& feature)>;

/// Runs decoder blocks from..1. taps (when given) receive the pre-hook output
/// of each block N >= 2 at index N-2 (the reproduced relu(N-1)_1).
template <class Exec>
typename Exec::Handle decode_from(Exec& ex, const ModelConfig& cfg, std::size_t from, typename Exec::Handle x,
                                  const SkipBundle<typename Exec::Handle>& skips,
                                  const TapHook<typename Exec::Handle>& hook,
                                  std::vector<typename Exec::Handle>* reproduced) {
    for (std::size_t n = from; n >= 1; --n) {
        x = decode_block(ex, cfg, n, x, skips);
        if (n >= 2) {
            if (reproduced) reproduced->push_back(x);
            if (hook) x = hook(n - 1, x);
        }
    }
    return x;
}

// ---- eager convenience API -------------------------------------------------------

template <class T>
struct Encoded {
    Tensor<T> bottleneck;
    FeatureTaps<Tensor<T>> taps;
    SkipBundle<Tensor<T>> skips;
};

template <class T>
void check_image(const ModelConfig& cfg, const Tensor<T>& image) {
    if (image.c() != cfg.in_channels)
        throw ShapeError("encode: image has " + std::to_string(image.c()) + " channels, config expects " +
                         std::to_string(cfg.in_channels));
    if (image.h() == 0 || image.w() == 0) throw ShapeError("encode: empty image");
}

template <class T>
Encoded<T> encode(const Tensor<T>& image, const ModelConfig& cfg, const BlockWeights<T>& w,
                  std::size_t upto = 0) {
    check_image(cfg, image);
    if (upto == 0) upto = cfg.depth();
    EagerExec<T> ex(w);
    Encoded<T> out;
    out.bottleneck = encode_upto(ex, cfg, image, upto, &out.taps, &out.skips);
    return out;
}

template <class T>
struct Decoded {
    Tensor<T> image;  // unclamped
    /// Reproduced features: taps.features[N-1] ≈ reluN_1 for N < from; the
    /// entry for `from` is the (possibly transformed) bottleneck input.
    FeatureTaps<Tensor<T>> taps;
};

template <class T>
Decoded<T> decode(const Tensor<T>& bottleneck, const SkipBundle<Tensor<T>>& skips, const ModelConfig& cfg,
                  const BlockWeights<T>& w, const TapHook<Tensor<T>>& hook = {}, std::size_t from = 0) {
    if (from == 0) from = cfg.depth();
    if (bottleneck.c() != cfg.width(from))
        throw ShapeError("decode: bottleneck has " + std::to_string(bottleneck.c()) + " channels, dec block " +
                         std::to_string(from) + " expects " + std::to_string(cfg.width(from)));
    EagerExec<T> ex(w);
    std::vector<Tensor<T>> reproduced;
    Decoded<T> out;
    out.image = decode_from(ex, cfg, from, bottleneck, skips, hook, &reproduced);
    out.taps.features.resize(from);
    for (std::size_t i = 0; i < reproduced.size(); ++i) out.taps.features[from - 2 - i] = std::move(reproduced[i]);
    out.taps.features[from - 1] = bottleneck;
    return out;
}

template <class T>
Tensor<T> clamp01(Tensor<T> x) {
    for (auto& v : x.data()) v = std::clamp(v, T(0), T(1));
    return x;
}

/// Full encode → decode round trip, unclamped.
template <class T>
Tensor<T> reconstruct(const Tensor<T>& image, const ModelConfig& cfg, const BlockWeights<T>& w) {
    auto e = encode(image, cfg, w);
    return decode(e.bottleneck, e.skips, cfg, w).image;
}

template <class U, class T>
BlockWeights<U> cast_weights(const BlockWeights<T>& w) {
    auto cast_conv = [](const ConvParams<T>& p) {
        ConvParams<U> q{p.weight.template cast<U>(), std::vector<U>(p.bias.begin(), p.bias.end()), p.stride,
                        p.padding, p.pad_mode};
        return q;
    };
    auto cast_blocks = [&](const std::vector<std::vector<ConvParams<T>>>& blocks) {
        std::vector<std::vector<ConvParams<U>>> out;
        for (const auto& b : blocks) {
            auto& ob = out.emplace_back();
            for (const auto& p : b) ob.push_back(cast_conv(p));
        }
        return out;
    };
    BlockWeights<U> out;
    out.encoder = cast_blocks(w.encoder);
    out.decoder = cast_blocks(w.decoder);
    out.decoder_trained = w.decoder_trained;
    for (const auto& p : w.metric_block) out.metric_block.push_back(cast_conv(p));
    return out;
}

}  // namespace hfw
