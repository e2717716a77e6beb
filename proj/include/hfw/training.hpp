#pragma once

// Decoder training: blockwise inward / outward, end-to-end, vanilla; plus the
// reconstruction report used by the ablations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hfw/adam.hpp"
#include "hfw/autodiff.hpp"
#include "hfw/model.hpp"

namespace hfw {

enum class Strategy : std::uint8_t { blockwise_inward, blockwise_outward, end_to_end, vanilla };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::blockwise_inward: return "blockwise_inward";
        case Strategy::blockwise_outward: return "blockwise_outward";
        case Strategy::end_to_end: return "end_to_end";
        case Strategy::vanilla: return "vanilla";
    }
    return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "blockwise_inward" || s == "inward") return Strategy::blockwise_inward;
    if (s == "blockwise_outward" || s == "outward") return Strategy::blockwise_outward;
    if (s == "end_to_end") return Strategy::end_to_end;
    if (s == "vanilla") return Strategy::vanilla;
    return std::nullopt;
}

struct TrainPlan {
    Strategy strategy = Strategy::blockwise_inward;
    std::size_t epochs = 20;  // per stage
    std::size_t batch = 8;
    /// Epochs for the joint strategies (end_to_end, vanilla); 0 = epochs * D,
    /// the same optimizer step count as a blockwise run.
    std::size_t joint_epochs = 0;
    AdamHyper adam{};
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs == 0 || batch == 0) throw std::invalid_argument("TrainPlan: epochs and batch must be >= 1");
    }
};

struct LossTerms {
    double inversion = 0, image = 0, perceptual = 0;
    int indicator = 0, lambda = 0;
    [[nodiscard]] double total() const { return indicator * inversion + image + lambda * perceptual; }
};

struct EpochLog {
    std::string strategy;
    std::size_t stage = 0;  // decoder block, 0 for joint strategies
    std::size_t epoch = 0;
    double mean_loss = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

template <class T>
SkipBundle<ad::NodeId> lift_skips(ad::Tape<T>& tape, const SkipBundle<Tensor<T>>& skips) {
    SkipBundle<ad::NodeId> out;
    for (const auto& [level, p] : skips.levels) {
        SkipPayload<ad::NodeId> q;
        q.variant = p.variant;
        q.pad = p.pad;
        q.indices = p.indices;
        for (const auto& b : p.bands) q.bands.push_back(tape.constant(b));
        out.levels.emplace(level, std::move(q));
    }
    return out;
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& data, const std::vector<std::size_t>& idx) {
    std::vector<Tensor<T>> items;
    items.reserve(idx.size());
    for (auto i : idx) items.push_back(data.at(i));
    return stack_batch<T>(std::span<const Tensor<T>>(items));
}

/// Records L_N for inward block N onto the tape given a teacher encoding of
/// `image` up to level N.
template <class T>
std::pair<ad::NodeId, LossTerms> record_inward(TapeExec<T>& ex, const ModelConfig& cfg, std::size_t n,
                                               const Tensor<T>& image, const Encoded<T>& teacher) {
    auto& tape = ex.tape();
    const auto skips = lift_skips(tape, teacher.skips);
    const auto img = tape.constant(image);
    const auto phi_n = tape.constant(teacher.taps.features.at(n - 1));
    LossTerms terms;
    const auto d = decode_block(ex, cfg, n, phi_n, skips);
    if (n == 1) {
        const auto l_img = tape.mse(img, d);
        terms.image = double(tape.value(l_img)[0]);
        return {l_img, terms};
    }
    terms.indicator = terms.lambda = 1;
    const auto phi_prev = tape.constant(teacher.taps.features.at(n - 2));
    const auto l_inv = tape.mse(phi_prev, d);
    const auto rec = decode_from(ex, cfg, n - 1, d, skips, TapHook<ad::NodeId>{}, nullptr);
    const auto l_img = tape.mse(img, rec);
    const auto re = encode_upto(ex, cfg, rec, n, nullptr, nullptr);
    const auto l_per = tape.mse(phi_n, re);
    terms.inversion = double(tape.value(l_inv)[0]);
    terms.image = double(tape.value(l_img)[0]);
    terms.perceptual = double(tape.value(l_per)[0]);
    return {tape.lincomb({l_inv, l_img, l_per}, {T(1), T(1), T(1)}), terms};
}

template <class T>
void require_trained_below(const BlockWeights<T>& w, std::size_t n) {
    for (std::size_t k = 1; k < n; ++k)
        if (k - 1 >= w.decoder_trained.size() || !w.decoder_trained[k - 1])
            throw std::logic_error("inward loss for block " + std::to_string(n) + " needs decoder block " +
                                   std::to_string(k) + " trained first");
}

/// Generic optimisation loop over the dataset. `build` records the loss for a
/// batch onto a fresh tape and returns its node.
template <class T, class Build>
void optimise(std::vector<Tensor<T>> const& data, BlockWeights<T>& w, const std::vector<bool>& trainable,
              const TrainPlan& plan, std::size_t epochs, std::size_t stage, Build&& build,
              const EpochCallback& on_epoch) {
    AdamState<T> adam;
    adam.hyper = plan.adam;
    std::mt19937_64 rng(plan.seed * 1000003ULL + stage * 7919ULL + 1);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t steps = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += plan.batch) {
            const std::vector<std::size_t> idx(order.begin() + b0,
                                               order.begin() + std::min(order.size(), b0 + plan.batch));
            const Tensor<T> batch = stack(data, idx);
            ad::Tape<T> tape;
            TapeExec<T> ex(tape, w, trainable);
            const ad::NodeId loss = build(ex, batch);
            loss_sum += double(tape.value(loss)[0]);
            ++steps;
            auto grads = tape.backward(loss);
            std::vector<Tensor<T>*> params;
            std::vector<const Tensor<T>*> gptr;
            std::vector<Tensor<T>> biases;
            std::vector<std::pair<std::size_t, std::size_t>> bias_owner;
            biases.reserve(ex.decoder_leaves().size());
            for (const auto& [key, ids] : ex.decoder_leaves()) {
                if (!trainable[key.first - 1]) continue;
                auto& p = w.decoder[key.first - 1][key.second];
                params.push_back(&p.weight);
                auto gw = grads.find(ids.first.v);
                gptr.push_back(gw == grads.end() ? nullptr : &gw->second);
                biases.emplace_back(Shape{1, p.bias.size(), 1, 1}, p.bias);
                bias_owner.push_back(key);
                auto gb = grads.find(ids.second.v);
                gptr.push_back(gb == grads.end() ? nullptr : &gb->second);
                params.push_back(nullptr);  // patched below once `biases` is stable
            }
            std::size_t bi = 0;
            for (auto& ptr : params)
                if (ptr == nullptr) ptr = &biases[bi++];
            adam_step<T>(std::span<Tensor<T>* const>(params), std::span<const Tensor<T>* const>(gptr), adam);
            for (std::size_t k = 0; k < biases.size(); ++k) {
                auto& p = w.decoder[bias_owner[k].first - 1][bias_owner[k].second];
                std::copy(biases[k].data().begin(), biases[k].data().end(), p.bias.begin());
            }
        }
        if (on_epoch) on_epoch(EpochLog{std::string(to_string(plan.strategy)), stage, epoch, loss_sum / double(steps)});
    }
}

inline std::vector<bool> only_block(std::size_t depth, std::size_t n) {
    std::vector<bool> m(depth, false);
    m[n - 1] = true;
    return m;
}

}  // namespace detail

/// Inward loss terms for block N on image batch I (values only).
template <class T>
LossTerms loss_block_inward(std::size_t n, const Tensor<T>& image, const ModelConfig& cfg, const BlockWeights<T>& w) {
    if (n < 1 || n > cfg.depth()) throw std::out_of_range("loss_block_inward: block out of range");
    detail::require_trained_below(w, n);
    const auto teacher = encode(image, cfg, w, n);
    ad::Tape<T> tape;
    TapeExec<T> ex(tape, w, detail::only_block(cfg.depth(), n));
    return detail::record_inward(ex, cfg, n, image, teacher).second;
}

/// Outward loss for block N: ‖φ_{N-1} − dec_N(...dec_D(φ_D))‖² / count, φ_0 = I.
template <class T>
double loss_block_outward(std::size_t n, const Tensor<T>& image, const ModelConfig& cfg, const BlockWeights<T>& w) {
    const auto teacher = encode(image, cfg, w);
    EagerExec<T> ex(w);
    Tensor<T> x = teacher.bottleneck;
    for (std::size_t k = cfg.depth(); k >= n; --k) x = decode_block(ex, cfg, k, x, teacher.skips);
    const Tensor<T>& target = n == 1 ? image : teacher.taps.features[n - 2];
    return sum_squares(x - target) / double(x.numel());
}

template <class T>
BlockWeights<T> train_blockwise_inward(const std::vector<Tensor<T>>& data, const ModelConfig& cfg, BlockWeights<T> w,
                                       TrainPlan plan, const EpochCallback& on_epoch = {}) {
    plan.validate();
    plan.strategy = Strategy::blockwise_inward;
    check_weights(cfg, w);
    for (std::size_t n = 1; n <= cfg.depth(); ++n) {
        const auto mask = detail::only_block(cfg.depth(), n);
        detail::optimise(data, w, mask, plan, plan.epochs, n,
                         [&](TapeExec<T>& ex, const Tensor<T>& batch) {
                             const auto teacher = encode(batch, cfg, w, n);
                             return detail::record_inward(ex, cfg, n, batch, teacher).first;
                         },
                         on_epoch);
        w.decoder_trained[n - 1] = true;
    }
    return w;
}

template <class T>
BlockWeights<T> train_blockwise_outward(const std::vector<Tensor<T>>& data, const ModelConfig& cfg,
                                        BlockWeights<T> w, TrainPlan plan, const EpochCallback& on_epoch = {}) {
    plan.validate();
    plan.strategy = Strategy::blockwise_outward;
    check_weights(cfg, w);
    for (std::size_t n = cfg.depth(); n >= 1; --n) {
        const auto mask = detail::only_block(cfg.depth(), n);
        detail::optimise(data, w, mask, plan, plan.epochs, n,
                         [&](TapeExec<T>& ex, const Tensor<T>& batch) {
                             const auto teacher = encode(batch, cfg, w);
                             // Blocks above N are frozen and need no gradient: run them eagerly.
                             EagerExec<T> eager(w);
                             Tensor<T> x = teacher.bottleneck;
                             for (std::size_t k = cfg.depth(); k > n; --k)
                                 x = decode_block(eager, cfg, k, x, teacher.skips);
                             auto& tape = ex.tape();
                             const auto skips = detail::lift_skips(tape, teacher.skips);
                             const auto out = decode_block(ex, cfg, n, tape.constant(x), skips);
                             const auto target = tape.constant(n == 1 ? batch : teacher.taps.features[n - 2]);
                             return tape.mse(target, out);
                         },
                         on_epoch);
        w.decoder_trained[n - 1] = true;
    }
    return w;
}

template <class T>
BlockWeights<T> train_end_to_end(const std::vector<Tensor<T>>& data, const ModelConfig& cfg, BlockWeights<T> w,
                                 TrainPlan plan, const EpochCallback& on_epoch = {}) {
    plan.validate();
    plan.strategy = Strategy::end_to_end;
    check_weights(cfg, w);
    const std::vector<bool> all(cfg.depth(), true);
    const std::size_t epochs = plan.joint_epochs ? plan.joint_epochs : plan.epochs * cfg.depth();
    detail::optimise(data, w, all, plan, epochs, 0,
                     [&](TapeExec<T>& ex, const Tensor<T>& batch) {
                         const auto teacher = encode(batch, cfg, w);
                         std::vector<ad::NodeId> terms;
                         for (std::size_t n = 1; n <= cfg.depth(); ++n)
                             terms.push_back(detail::record_inward(ex, cfg, n, batch, teacher).first);
                         return ex.tape().lincomb(terms, std::vector<T>(terms.size(), T(1)));
                     },
                     on_epoch);
    w.decoder_trained.assign(cfg.depth(), true);
    return w;
}

template <class T>
BlockWeights<T> train_vanilla(const std::vector<Tensor<T>>& data, const ModelConfig& cfg, BlockWeights<T> w,
                              TrainPlan plan, const EpochCallback& on_epoch = {}) {
    plan.validate();
    plan.strategy = Strategy::vanilla;
    check_weights(cfg, w);
    const std::vector<bool> all(cfg.depth(), true);
    const std::size_t epochs = plan.joint_epochs ? plan.joint_epochs : plan.epochs * cfg.depth();
    detail::optimise(data, w, all, plan, epochs, 0,
                     [&](TapeExec<T>& ex, const Tensor<T>& batch) {
                         const auto teacher = encode(batch, cfg, w);
                         auto& tape = ex.tape();
                         const auto skips = detail::lift_skips(tape, teacher.skips);
                         const auto rec = decode_from(ex, cfg, cfg.depth(), tape.constant(teacher.bottleneck), skips,
                                                      TapHook<ad::NodeId>{}, nullptr);
                         return tape.mse(tape.constant(batch), rec);
                     },
                     on_epoch);
    w.decoder_trained.assign(cfg.depth(), true);
    return w;
}

template <class T>
BlockWeights<T> train(const std::vector<Tensor<T>>& data, const ModelConfig& cfg, BlockWeights<T> w,
                      const TrainPlan& plan, const EpochCallback& on_epoch = {}) {
    switch (plan.strategy) {
        case Strategy::blockwise_inward: return train_blockwise_inward(data, cfg, std::move(w), plan, on_epoch);
        case Strategy::blockwise_outward: return train_blockwise_outward(data, cfg, std::move(w), plan, on_epoch);
        case Strategy::end_to_end: return train_end_to_end(data, cfg, std::move(w), plan, on_epoch);
        case Strategy::vanilla: return train_vanilla(data, cfg, std::move(w), plan, on_epoch);
    }
    throw std::invalid_argument("train: unknown strategy");
}

// ---- reconstruction report ---------------------------------------------------

/// Mean relative feature losses at relu(D-1)_1 .. relu1_1 and mean image loss
/// over a dataset, for a full encode → decode pass.
struct ReconReport {
    std::vector<std::string> columns;  // e.g. relu3_1 relu2_1 relu1_1 image
    std::vector<double> values;
};

template <class T>
double relative_feature_loss(const Tensor<T>& f, const Tensor<T>& fr) {
    require_same_shape(f.shape(), fr.shape(), "feature_recon_loss");
    const double denom = sum_squares(f);
    if (denom == 0) throw std::domain_error("feature_recon_loss: reference feature has zero norm");
    return sum_squares(f - fr) / denom;
}

template <class T>
double image_loss(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "image_recon_loss");
    return sum_squares(a - b) / double(a.numel());
}

template <class T>
ReconReport reconstruction_report(const std::vector<Tensor<T>>& data, const ModelConfig& cfg, const BlockWeights<T>& w) {
    const std::size_t d = cfg.depth();
    ReconReport r;
    for (std::size_t n = d - 1; n >= 1; --n) r.columns.push_back("relu" + std::to_string(n) + "_1");
    r.columns.push_back("image");
    r.values.assign(r.columns.size(), 0.0);
    for (const auto& img : data) {
        const auto e = encode(img, cfg, w);
        const auto dec = decode(e.bottleneck, e.skips, cfg, w);
        for (std::size_t n = d - 1, col = 0; n >= 1; --n, ++col)
            r.values[col] += relative_feature_loss(e.taps.features[n - 1], dec.taps.features[n - 1]);
        r.values.back() += image_loss(img, clamp01(dec.image));
    }
    for (auto& v : r.values) v /= double(data.size());
    return r;
}

struct InwardGradCheck {
    double rel_error = 0;  // ‖g_fd − g_ad‖ / ‖g_fd‖ over the smooth coordinates
    std::size_t probed = 0, skipped = 0;
};

/// Central finite differences of loss_block_inward(n).total() against the tape
/// gradient for block N's weights (every `stride`-th entry) and biases. A
/// coordinate whose differences at h and h/4 disagree sits on a relu or
/// max-pool kink and is skipped.
inline InwardGradCheck inward_grad_check(std::size_t n, const Tensor<double>& image, const ModelConfig& cfg,
                                         BlockWeights<double> w, std::size_t stride = 3, double step = 1e-5) {
    ad::Tape<double> tape;
    TapeExec<double> ex(tape, w, detail::only_block(cfg.depth(), n));
    const auto teacher = encode(image, cfg, w, n);
    const auto grads = tape.backward(detail::record_inward(ex, cfg, n, image, teacher).first);
    InwardGradCheck r;
    double num = 0, den = 0;
    auto central = [&](double& v, double h) {
        const double orig = v;
        v = orig + h;
        const double up = loss_block_inward(n, image, cfg, w).total();
        v = orig - h;
        const double dn = loss_block_inward(n, image, cfg, w).total();
        v = orig;
        return (up - dn) / (2 * h);
    };
    auto probe = [&](double& v, double analytic) {
        ++r.probed;
        const double fd = central(v, step);
        if (std::abs(fd - central(v, step / 4)) > 1e-6 * std::abs(fd) + 1e-9) {
            ++r.skipped;
            return;
        }
        num += (fd - analytic) * (fd - analytic);
        den += fd * fd;
    };
    for (const auto& [key, ids] : ex.decoder_leaves()) {
        if (key.first != n) continue;
        auto& p = w.decoder[n - 1][key.second];
        const auto& gw = grads.at(ids.first.v);
        for (std::size_t i = 0; i < p.weight.numel(); i += stride) probe(p.weight[i], gw[i]);
        const auto& gb = grads.at(ids.second.v);
        for (std::size_t i = 0; i < p.bias.size(); ++i) probe(p.bias[i], gb[i]);
    }
    r.rel_error = den > 0 ? std::sqrt(num / den) : (num > 0 ? INFINITY : 0.0);
    return r;
}

}  // namespace hfw
