#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hfw/image_io.hpp"
#include "hfw/tensor.hpp"

namespace hfw {

struct DatasetSpec {
    enum class Source { directory, synthetic };
    Source source = Source::synthetic;
    std::string directory;
    std::size_t count = 64;   // synthetic only
    std::size_t resize = 64;  // square side after resize
    std::size_t crop = 32;    // square random crop
    std::uint64_t seed = 1;

    void validate() const {
        if (crop == 0 || resize == 0) throw std::invalid_argument("DatasetSpec: zero size");
        if (crop > resize) throw std::invalid_argument("DatasetSpec: crop larger than resize");
        if (source == Source::synthetic && count == 0) throw std::invalid_argument("DatasetSpec: zero count");
    }
};

/// Bilinear resize (align-corners off) of a (1, c, h, w) image.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t oh, std::size_t ow) {
    Tensor<T> out(Shape{img.n(), img.c(), oh, ow});
    const double sy = double(img.h()) / double(oh), sx = double(img.w()) / double(ow);
    for (std::size_t b = 0; b < img.n(); ++b)
        for (std::size_t c = 0; c < img.c(); ++c)
            for (std::size_t y = 0; y < oh; ++y) {
                const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(img.h() - 1));
                const auto y0 = static_cast<std::size_t>(fy);
                const std::size_t y1 = std::min(y0 + 1, img.h() - 1);
                const double wy = fy - double(y0);
                for (std::size_t x = 0; x < ow; ++x) {
                    const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(img.w() - 1));
                    const auto x0 = static_cast<std::size_t>(fx);
                    const std::size_t x1 = std::min(x0 + 1, img.w() - 1);
                    const double wx = fx - double(x0);
                    const double v = (1 - wy) * ((1 - wx) * img(b, c, y0, x0) + wx * img(b, c, y0, x1)) +
                                     wy * ((1 - wx) * img(b, c, y1, x0) + wx * img(b, c, y1, x1));
                    out(b, c, y, x) = static_cast<T>(v);
                }
            }
    return out;
}

template <class T>
Tensor<T> crop_window(const Tensor<T>& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > img.h() || x0 + w > img.w()) throw ShapeError("crop_window: window outside image " + img.shape().str());
    Tensor<T> out(Shape{img.n(), img.c(), h, w});
    for (std::size_t b = 0; b < img.n(); ++b)
        for (std::size_t c = 0; c < img.c(); ++c)
            for (std::size_t y = 0; y < h; ++y)
                std::copy_n(img.plane(b, c) + (y0 + y) * img.w() + x0, w, out.plane(b, c) + y * w);
    return out;
}

/// Seeded composition of a colour gradient, rectangles and sinusoidal
/// textures, clamped to [0, 1].
template <class T>
Tensor<T> synthetic_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<T> img(Shape{1, 3, h, w});
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = u(rng);
        c1[c] = u(rng);
    }
    const double ang = 2 * std::numbers::pi * u(rng);
    const double dx = std::cos(ang), dy = std::sin(ang);
    const double diag = std::abs(dx) * double(w) + std::abs(dy) * double(h);
    std::vector<double> buf(3 * h * w);
    auto at = [&](int c, std::size_t y, std::size_t x) -> double& { return buf[(c * h + y) * w + x]; };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double t = std::clamp(0.5 + (dx * (double(x) - w / 2.0) + dy * (double(y) - h / 2.0)) / diag, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) at(c, y, x) = (1 - t) * c0[c] + t * c1[c];
        }
    const int rects = 2 + static_cast<int>(u(rng) * 4);
    for (int r = 0; r < rects; ++r) {
        const auto y0 = static_cast<std::size_t>(u(rng) * h), x0 = static_cast<std::size_t>(u(rng) * w);
        const auto rh = 2 + static_cast<std::size_t>(u(rng) * h / 2), rw = 2 + static_cast<std::size_t>(u(rng) * w / 2);
        const double alpha = 0.5 + 0.5 * u(rng);
        double col[3];
        for (auto& v : col) v = u(rng);
        for (std::size_t y = y0; y < std::min(h, y0 + rh); ++y)
            for (std::size_t x = x0; x < std::min(w, x0 + rw); ++x)
                for (int c = 0; c < 3; ++c) at(c, y, x) = (1 - alpha) * at(c, y, x) + alpha * col[c];
    }
    const int waves = 1 + static_cast<int>(u(rng) * 2);
    for (int k = 0; k < waves; ++k) {
        const double freq = 0.15 + 0.9 * u(rng);
        const double th = std::numbers::pi * u(rng);
        const double phase = 2 * std::numbers::pi * u(rng);
        const double amp = 0.05 + 0.15 * u(rng);
        double tint[3];
        for (auto& v : tint) v = 0.5 + 0.5 * u(rng);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double s = amp * std::sin(freq * (std::cos(th) * double(x) + std::sin(th) * double(y)) + phase);
                for (int c = 0; c < 3; ++c) at(c, y, x) += tint[c] * s;
            }
    }
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = static_cast<T>(std::clamp(buf[i], 0.0, 1.0));
    return img;
}

/// Loads the dataset as (1, 3, crop, crop) tensors in a deterministic order.
template <class T>
std::vector<Tensor<T>> load_dataset(const DatasetSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::vector<Tensor<T>> base;
    if (spec.source == DatasetSpec::Source::synthetic) {
        for (std::size_t i = 0; i < spec.count; ++i) base.push_back(synthetic_image<T>(spec.resize, spec.resize, rng));
    } else {
        std::vector<std::filesystem::path> files;
        std::error_code ec;
        for (const auto& e : std::filesystem::directory_iterator(spec.directory, ec))
            if (e.is_regular_file()) files.push_back(e.path());
        if (ec) throw std::runtime_error("dataset: cannot list " + spec.directory + ": " + ec.message());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                base.push_back(resize_bilinear(read_image<T>(f.string()), spec.resize, spec.resize));
            } catch (const std::exception& ex) {
                std::cerr << "warning: skipping " << f.string() << ": " << ex.what() << "\n";
            }
        }
    }
    if (base.empty()) throw std::runtime_error("dataset: no usable images");
    std::vector<Tensor<T>> out;
    out.reserve(base.size());
    std::uniform_int_distribution<std::size_t> off(0, spec.resize - spec.crop);
    for (const auto& img : base) {
        const std::size_t y0 = off(rng), x0 = off(rng);
        out.push_back(crop_window(img, y0, x0, spec.crop, spec.crop));
    }
    return out;
}

}  // namespace hfw
