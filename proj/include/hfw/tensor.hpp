#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfw {

/// Raised for any shape disagreement between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// (batch, channels, height, width).
struct Shape {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    [[nodiscard]] constexpr std::size_t numel() const noexcept { return n * c * h * w; }
    [[nodiscard]] constexpr std::size_t plane() const noexcept { return h * w; }
    constexpr bool operator==(const Shape&) const = default;

    [[nodiscard]] std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Dense NCHW tensor with row-major storage.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {}
    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        if (data_.size() != shape_.numel())
            throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t numel() const noexcept { return data_.size(); }
    [[nodiscard]] std::size_t n() const noexcept { return shape_.n; }
    [[nodiscard]] std::size_t c() const noexcept { return shape_.c; }
    [[nodiscard]] std::size_t h() const noexcept { return shape_.h; }
    [[nodiscard]] std::size_t w() const noexcept { return shape_.w; }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] T* raw() noexcept { return data_.data(); }
    [[nodiscard]] const T* raw() const noexcept { return data_.data(); }
    [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    [[nodiscard]] std::size_t index(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const noexcept {
        return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) noexcept {
        return data_[index(b, ch, y, x)];
    }
    const T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const noexcept {
        return data_[index(b, ch, y, x)];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Pointer to the (b, ch) plane.
    T* plane(std::size_t b, std::size_t ch) noexcept { return data_.data() + (b * shape_.c + ch) * shape_.plane(); }
    const T* plane(std::size_t b, std::size_t ch) const noexcept {
        return data_.data() + (b * shape_.c + ch) * shape_.plane();
    }

    [[nodiscard]] Tensor reshaped(Shape s) const {
        if (s.numel() != numel()) throw ShapeError("reshape: " + shape_.str() + " -> " + s.str());
        return Tensor(s, data_);
    }

    template <class U>
    [[nodiscard]] Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_{};
    std::vector<T> data_;
};

// ---- elementwise helpers -------------------------------------------------

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <class T>
Tensor<T> operator*(T s, const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = s * a[i];
    return out;
}

template <class T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    require_same_shape(dst.shape(), src.shape(), "add_inplace");
    T* d = dst.raw();
    const T* s = src.raw();
    for (std::size_t i = 0, e = dst.numel(); i < e; ++i) d[i] += s[i];
}

template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "dot");
    double acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += double(a[i]) * double(b[i]);
    return acc;
}

template <class T>
double sum_squares(const Tensor<T>& a) {
    double acc = 0;
    for (T v : a.data()) acc += double(v) * double(v);
    return acc;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

template <class T>
bool all_finite(const Tensor<T>& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

/// Uniform [lo, hi) fill from a seeded engine.
template <class T>
Tensor<T> random_uniform(Shape s, std::mt19937_64& rng, T lo = T(-1), T hi = T(1)) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <class T>
Tensor<T> random_normal(Shape s, std::mt19937_64& rng, T mean = T(0), T stddev = T(1)) {
    std::normal_distribution<double> dist(mean, stddev);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

/// Concatenate along channels.
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    Shape s = parts.front()->shape();
    std::size_t total_c = 0;
    for (const auto* p : parts) {
        if (p->n() != s.n || p->h() != s.h || p->w() != s.w)
            throw ShapeError("concat_channels: mismatched " + p->shape().str() + " vs " + s.str());
        total_c += p->c();
    }
    Tensor<T> out(Shape{s.n, total_c, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b) {
        std::size_t off = 0;
        for (const auto* p : parts) {
            std::copy_n(p->plane(b, 0), p->c() * s.plane(), out.plane(b, off));
            off += p->c();
        }
    }
    return out;
}

/// Slice channels [begin, begin+count).
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.c())
        throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of " + std::to_string(x.c()) + " channels");
    Shape s = x.shape();
    Tensor<T> out(Shape{s.n, count, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b) std::copy_n(x.plane(b, begin), count * s.plane(), out.plane(b, 0));
    return out;
}

/// Select one batch item as an n=1 tensor.
template <class T>
Tensor<T> batch_item(const Tensor<T>& x, std::size_t b) {
    Shape s = x.shape();
    Tensor<T> out(Shape{1, s.c, s.h, s.w});
    std::copy_n(x.plane(b, 0), s.c * s.plane(), out.raw());
    return out;
}

template <class T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch: empty");
    Shape s = items.front().shape();
    Tensor<T> out(Shape{items.size() * s.n, s.c, s.h, s.w});
    std::size_t off = 0;
    for (const auto& t : items) {
        if (t.c() != s.c || t.h() != s.h || t.w() != s.w)
            throw ShapeError("stack_batch: " + t.shape().str() + " vs " + s.str());
        std::copy(t.data().begin(), t.data().end(), out.raw() + off);
        off += t.numel();
    }
    return out;
}

}  // namespace hfw
