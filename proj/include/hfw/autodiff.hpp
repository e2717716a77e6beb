#pragma once

// Reverse-mode differentiation over a recorded list of primitive applications.
//
// Leaves are constants, frozen parameters or trainable parameters. Only
// trainable leaves receive gradients; gradients still propagate through ops
// that consume frozen leaves. Node ids are indices into the tape, so the
// recording order is a topological order by construction.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hfw/ops.hpp"
#include "hfw/tensor.hpp"

namespace hfw::ad {

enum class OpTag : std::uint8_t {
    leaf,
    conv2d,
    relu,
    avg_pool,
    upsample,
    sum_pool,
    max_pool,
    max_unpool,
    dw_conv2,
    dw_deconv2,
    lincomb,
    concat,
    slice,
    pad_even,
    crop,
    mse,
};

enum class LeafKind : std::uint8_t { constant, frozen, trainable };

struct NodeId {
    std::uint32_t v = 0;
    bool operator==(const NodeId&) const = default;
};

template <class T>
struct Attrs {
    int stride = 1;
    int padding = 0;
    PadMode mode = PadMode::zero;
    std::vector<Kernel2x2<T>> kernels;
    std::vector<T> coeffs;
    IndexMap indices;
    PadRecord pad;
    std::size_t begin = 0, count = 0;
};

template <class T>
class Tape {
public:
    struct Node {
        OpTag op = OpTag::leaf;
        LeafKind kind = LeafKind::constant;
        std::vector<std::uint32_t> inputs;
        Attrs<T> attrs;
        Tensor<T> value;
        bool requires_grad = false;
    };

    // ---- leaves ----
    NodeId constant(Tensor<T> v) { return push_leaf(std::move(v), LeafKind::constant); }
    NodeId frozen(Tensor<T> v) { return push_leaf(std::move(v), LeafKind::frozen); }
    NodeId trainable(Tensor<T> v) { return push_leaf(std::move(v), LeafKind::trainable); }

    [[nodiscard]] const Tensor<T>& value(NodeId id) const { return nodes_.at(id.v).value; }
    [[nodiscard]] const Node& node(NodeId id) const { return nodes_.at(id.v); }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
    [[nodiscard]] bool requires_grad(NodeId id) const { return nodes_.at(id.v).requires_grad; }

    /// Index map recorded by a max_pool node.
    [[nodiscard]] const IndexMap& indices(NodeId pooled) const {
        const auto& n = nodes_.at(pooled.v);
        if (n.op != OpTag::max_pool) throw std::invalid_argument("indices: node is not a max_pool");
        return n.attrs.indices;
    }

    // ---- ops ----
    /// `bias` is a (1, out_c, 1, 1) tensor.
    NodeId conv2d(NodeId x, NodeId weight, NodeId bias, int stride, int padding, PadMode mode) {
        validate_conv(value(x).shape(), value(weight).shape(), value(bias).numel(), stride, padding, mode);
        Attrs<T> a;
        a.stride = stride;
        a.padding = padding;
        a.mode = mode;
        return record(OpTag::conv2d, {x, weight, bias}, std::move(a));
    }
    NodeId relu(NodeId x) { return record(OpTag::relu, {x}); }
    NodeId avg_pool(NodeId x) { return record(OpTag::avg_pool, {x}); }
    NodeId upsample(NodeId x) { return record(OpTag::upsample, {x}); }
    NodeId max_pool(NodeId x) {
        require_even(value(x).shape(), "max_pool_2x2");
        return record(OpTag::max_pool, {x});
    }
    NodeId max_unpool(NodeId x, IndexMap idx) {
        Attrs<T> a;
        a.indices = std::move(idx);
        return record(OpTag::max_unpool, {x}, std::move(a));
    }
    NodeId dw_conv2(NodeId x, std::vector<Kernel2x2<T>> k) {
        Attrs<T> a;
        a.kernels = std::move(k);
        return record(OpTag::dw_conv2, {x}, std::move(a));
    }
    NodeId dw_deconv2(NodeId x, std::vector<Kernel2x2<T>> k) {
        Attrs<T> a;
        a.kernels = std::move(k);
        return record(OpTag::dw_deconv2, {x}, std::move(a));
    }
    /// Σ coeffs[i]·xs[i] over same-shaped inputs.
    NodeId lincomb(std::vector<NodeId> xs, std::vector<T> coeffs) {
        if (xs.empty() || xs.size() != coeffs.size()) throw std::invalid_argument("lincomb: bad arity");
        for (const auto& x : xs) require_same_shape(value(xs[0]).shape(), value(x).shape(), "lincomb");
        Attrs<T> a;
        a.coeffs = std::move(coeffs);
        return record(OpTag::lincomb, std::move(xs), std::move(a));
    }
    NodeId add(NodeId a, NodeId b) { return lincomb({a, b}, {T(1), T(1)}); }
    NodeId sub(NodeId a, NodeId b) { return lincomb({a, b}, {T(1), T(-1)}); }
    NodeId scale(NodeId a, T s) { return lincomb({a}, {s}); }
    NodeId concat(std::vector<NodeId> xs) { return record(OpTag::concat, std::move(xs)); }
    NodeId slice(NodeId x, std::size_t begin, std::size_t count) {
        Attrs<T> a;
        a.begin = begin;
        a.count = count;
        return record(OpTag::slice, {x}, std::move(a));
    }
    NodeId pad_even(NodeId x, PadRecord pad) {
        Attrs<T> a;
        a.pad = pad;
        return record(OpTag::pad_even, {x}, std::move(a));
    }
    NodeId crop(NodeId x, PadRecord pad) {
        Attrs<T> a;
        a.pad = pad;
        return record(OpTag::crop, {x}, std::move(a));
    }
    /// mean((a - b)^2) as a (1,1,1,1) tensor.
    NodeId mse(NodeId a, NodeId b) {
        require_same_shape(value(a).shape(), value(b).shape(), "mse");
        return record(OpTag::mse, {a, b});
    }

    /// Recomputes every non-leaf node from its inputs; true when all values
    /// match the recorded ones bitwise.
    [[nodiscard]] bool replay_matches() const {
        for (const auto& n : nodes_) {
            if (n.op == OpTag::leaf) continue;
            if (!(evaluate(n) == n.value)) return false;
        }
        return true;
    }

    /// Gradients of a scalar node with respect to every trainable leaf.
    std::unordered_map<std::uint32_t, Tensor<T>> backward(NodeId loss) const {
        const auto& ln = nodes_.at(loss.v);
        if (ln.value.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " + ln.value.shape().str());
        std::vector<std::optional<Tensor<T>>> grads(loss.v + 1);
        grads[loss.v] = Tensor<T>(ln.value.shape(), T(1));
        std::unordered_map<std::uint32_t, Tensor<T>> out;
        for (std::uint32_t i = loss.v + 1; i-- > 0;) {
            if (!grads[i]) continue;
            const auto& n = nodes_[i];
            if (!n.requires_grad) continue;
            if (n.op == OpTag::leaf) {
                if (n.kind == LeafKind::trainable) out.emplace(i, std::move(*grads[i]));
                grads[i].reset();
                continue;
            }
            propagate(n, *grads[i], grads);
            grads[i].reset();
        }
        return out;
    }

private:
    std::vector<Node> nodes_;

    NodeId push_leaf(Tensor<T> v, LeafKind kind) {
        Node n;
        n.kind = kind;
        n.value = std::move(v);
        n.requires_grad = kind == LeafKind::trainable;
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    NodeId record(OpTag op, std::vector<NodeId> inputs, Attrs<T> attrs = {}) {
        Node n;
        n.op = op;
        n.attrs = std::move(attrs);
        for (auto id : inputs) {
            if (id.v >= nodes_.size()) throw std::out_of_range("record: unknown input node");
            n.inputs.push_back(id.v);
            n.requires_grad = n.requires_grad || nodes_[id.v].requires_grad;
        }
        if (op == OpTag::max_pool) {
            auto [v, idx] = max_pool_2x2_with_indices(nodes_[n.inputs[0]].value);
            n.value = std::move(v);
            n.attrs.indices = std::move(idx);
        } else {
            n.value = evaluate(n);
        }
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    const Tensor<T>& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

    Tensor<T> evaluate(const Node& n) const {
        const auto& a = n.attrs;
        switch (n.op) {
            case OpTag::leaf: return n.value;
            case OpTag::conv2d: {
                const auto& b = in(n, 2);
                return hfw::conv2d(in(n, 0), in(n, 1), std::span<const T>(b.raw(), b.numel()), a.stride, a.padding,
                                   a.mode);
            }
            case OpTag::relu: return hfw::relu(in(n, 0));
            case OpTag::avg_pool: return avg_pool_2x2(in(n, 0));
            case OpTag::upsample: return upsample_nearest_2x(in(n, 0));
            case OpTag::sum_pool: return sum_pool_2x2(in(n, 0));
            case OpTag::max_pool: return max_pool_2x2_with_indices(in(n, 0)).first;
            case OpTag::max_unpool: return max_unpool_2x2(in(n, 0), a.indices);
            case OpTag::dw_conv2: return depthwise_conv_stride2(in(n, 0), std::span<const Kernel2x2<T>>(a.kernels));
            case OpTag::dw_deconv2:
                return depthwise_deconv_stride2(in(n, 0), std::span<const Kernel2x2<T>>(a.kernels));
            case OpTag::lincomb: {
                Tensor<T> out(in(n, 0).shape());
                for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                    const T c = a.coeffs[k];
                    const T* s = in(n, k).raw();
                    T* d = out.raw();
                    for (std::size_t i = 0; i < out.numel(); ++i) d[i] += c * s[i];
                }
                return out;
            }
            case OpTag::concat: {
                std::vector<const Tensor<T>*> parts;
                for (auto id : n.inputs) parts.push_back(&nodes_[id].value);
                return concat_channels<T>(std::span<const Tensor<T>* const>(parts));
            }
            case OpTag::slice: return slice_channels(in(n, 0), a.begin, a.count);
            case OpTag::pad_even: return pad_replicate(in(n, 0), a.pad);
            case OpTag::crop: return hfw::crop(in(n, 0), a.pad);
            case OpTag::mse: {
                const auto& x = in(n, 0);
                const auto& y = in(n, 1);
                double acc = 0;
                for (std::size_t i = 0; i < x.numel(); ++i) {
                    const double d = double(x[i]) - double(y[i]);
                    acc += d * d;
                }
                return Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / double(x.numel())));
            }
        }
        throw std::logic_error("evaluate: unknown op");
    }

    void accumulate(std::vector<std::optional<Tensor<T>>>& grads, std::uint32_t id, Tensor<T> g) const {
        if (!nodes_[id].requires_grad) return;
        if (grads[id]) add_inplace(*grads[id], g);
        else grads[id] = std::move(g);
    }

    void propagate(const Node& n, const Tensor<T>& g, std::vector<std::optional<Tensor<T>>>& grads) const {
        const auto& a = n.attrs;
        auto need = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
        switch (n.op) {
            case OpTag::leaf: return;
            case OpTag::conv2d: {
                Tensor<T> dx, dw;
                std::vector<T> db;
                hfw::conv2d_backward(in(n, 0), in(n, 1), a.stride, a.padding, a.mode, g, need(0) ? &dx : nullptr,
                                     need(1) ? &dw : nullptr, need(2) ? &db : nullptr);
                if (need(0)) accumulate(grads, n.inputs[0], std::move(dx));
                if (need(1)) accumulate(grads, n.inputs[1], std::move(dw));
                if (need(2)) accumulate(grads, n.inputs[2], Tensor<T>(in(n, 2).shape(), std::move(db)));
                return;
            }
            case OpTag::relu: accumulate(grads, n.inputs[0], relu_backward(in(n, 0), g)); return;
            case OpTag::avg_pool: accumulate(grads, n.inputs[0], upsample_nearest_2x(g, T(0.25))); return;
            case OpTag::upsample: accumulate(grads, n.inputs[0], sum_pool_2x2(g)); return;
            case OpTag::sum_pool: accumulate(grads, n.inputs[0], upsample_nearest_2x(g)); return;
            case OpTag::max_pool: accumulate(grads, n.inputs[0], max_unpool_2x2(g, a.indices)); return;
            case OpTag::max_unpool: accumulate(grads, n.inputs[0], max_gather_2x2(g, a.indices)); return;
            case OpTag::dw_conv2:
                accumulate(grads, n.inputs[0], depthwise_deconv_stride2(g, std::span<const Kernel2x2<T>>(a.kernels)));
                return;
            case OpTag::dw_deconv2:
                accumulate(grads, n.inputs[0], depthwise_conv_stride2(g, std::span<const Kernel2x2<T>>(a.kernels)));
                return;
            case OpTag::lincomb:
                for (std::size_t k = 0; k < n.inputs.size(); ++k)
                    if (need(k)) accumulate(grads, n.inputs[k], a.coeffs[k] * g);
                return;
            case OpTag::concat: {
                std::size_t off = 0;
                for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                    const std::size_t c = in(n, k).c();
                    if (need(k)) accumulate(grads, n.inputs[k], slice_channels(g, off, c));
                    off += c;
                }
                return;
            }
            case OpTag::slice: {
                const auto& x = in(n, 0);
                Tensor<T> dx(x.shape());
                for (std::size_t b = 0; b < x.n(); ++b)
                    std::copy_n(g.plane(b, 0), a.count * x.h() * x.w(), dx.plane(b, a.begin));
                accumulate(grads, n.inputs[0], std::move(dx));
                return;
            }
            case OpTag::pad_even: accumulate(grads, n.inputs[0], pad_replicate_backward(g, a.pad)); return;
            case OpTag::crop: accumulate(grads, n.inputs[0], crop_backward(g, a.pad)); return;
            case OpTag::mse: {
                const auto& x = in(n, 0);
                const auto& y = in(n, 1);
                const T s = T(2) * g[0] / static_cast<T>(x.numel());
                Tensor<T> d(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) d[i] = s * (x[i] - y[i]);
                if (need(1)) accumulate(grads, n.inputs[1], T(-1) * d);
                if (need(0)) accumulate(grads, n.inputs[0], std::move(d));
                return;
            }
        }
    }
};

}  // namespace hfw::ad
