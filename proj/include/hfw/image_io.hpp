#pragma once

// Binary PPM (P6) / PGM (P5) read and write, plus PNG when built with
// HFW_WITH_PNG. Images are (1, c, h, w) tensors with values in [0, 1].

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/tensor.hpp"
#include "hfw/zca.hpp"

#ifdef HFW_WITH_PNG
#include <png.h>
#endif

namespace hfw {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decoded 8-bit raster, channel-interleaved.
struct Raster {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;
};

namespace detail {

inline void skip_pnm_space(std::istream& in) {
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') {
            in.get();
        } else {
            return;
        }
    }
}

inline std::size_t read_pnm_int(std::istream& in, const std::string& path) {
    skip_pnm_space(in);
    std::size_t v = 0;
    if (!(in >> v)) throw ImageIoError(path + ": malformed PNM header");
    return v;
}

inline std::string lower_ext(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext;
}

}  // namespace detail

inline Raster read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError(path + ": cannot open");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5'))
        throw ImageIoError(path + ": not a binary PPM/PGM (P6/P5)");
    Raster r;
    r.channels = magic[1] == '6' ? 3 : 1;
    r.width = detail::read_pnm_int(in, path);
    r.height = detail::read_pnm_int(in, path);
    const std::size_t maxval = detail::read_pnm_int(in, path);
    if (maxval != 255) throw ImageIoError(path + ": only maxval 255 is supported");
    if (r.width == 0 || r.height == 0) throw ImageIoError(path + ": empty image");
    in.get();  // single whitespace before raster
    r.pixels.resize(r.width * r.height * r.channels);
    in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(r.pixels.size())) throw ImageIoError(path + ": truncated raster");
    return r;
}

inline void write_pnm(const std::string& path, const Raster& r) {
    if (r.channels != 1 && r.channels != 3) throw ImageIoError(path + ": PNM needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError(path + ": cannot open for writing");
    out << (r.channels == 3 ? "P6" : "P5") << "\n" << r.width << " " << r.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
    if (!out) throw ImageIoError(path + ": write failed");
}

#ifdef HFW_WITH_PNG
inline Raster read_png(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw ImageIoError(path + ": " + img.message);
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster r;
    r.width = img.width;
    r.height = img.height;
    r.channels = gray ? 1 : 3;
    r.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw ImageIoError(path + ": " + img.message);
    }
    return r;
}

inline void write_png(const std::string& path, const Raster& r) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(r.width);
    img.height = static_cast<png_uint_32>(r.height);
    img.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, r.pixels.data(), 0, nullptr))
        throw ImageIoError(path + ": " + img.message);
}
#endif

inline Raster read_raster(const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".png") {
#ifdef HFW_WITH_PNG
        return read_png(path);
#else
        throw ImageIoError(path + ": built without PNG support");
#endif
    }
    return read_pnm(path);
}

inline void write_raster(const std::string& path, const Raster& r) {
    if (detail::lower_ext(path) == ".png") {
#ifdef HFW_WITH_PNG
        write_png(path, r);
        return;
#else
        throw ImageIoError(path + ": built without PNG support");
#endif
    }
    write_pnm(path, r);
}

/// Raster → (1, c, h, w) tensor in [0, 1]. Gray rasters are expanded to
/// `want_channels` by replication when that is 3.
template <class T>
Tensor<T> raster_to_tensor(const Raster& r, std::size_t want_channels = 3) {
    const std::size_t c = want_channels;
    if (r.channels != c && !(r.channels == 1 && c == 3))
        throw ImageIoError("raster has " + std::to_string(r.channels) + " channels, need " + std::to_string(c));
    Tensor<T> t(Shape{1, c, r.height, r.width});
    for (std::size_t y = 0; y < r.height; ++y)
        for (std::size_t x = 0; x < r.width; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t src = r.channels == 1 ? 0 : ch;
                t(0, ch, y, x) = static_cast<T>(r.pixels[(y * r.width + x) * r.channels + src]) / T(255);
            }
    return t;
}

/// Tensor (batch item 0) → 8-bit raster, values clamped to [0, 1] and rounded.
template <class T>
Raster tensor_to_raster(const Tensor<T>& t) {
    if (t.c() != 1 && t.c() != 3) throw ImageIoError("tensor_to_raster: need 1 or 3 channels");
    Raster r{t.w(), t.h(), t.c(), std::vector<std::uint8_t>(t.w() * t.h() * t.c())};
    for (std::size_t y = 0; y < t.h(); ++y)
        for (std::size_t x = 0; x < t.w(); ++x)
            for (std::size_t ch = 0; ch < t.c(); ++ch) {
                const double v = std::clamp(double(t(0, ch, y, x)), 0.0, 1.0);
                r.pixels[(y * t.w() + x) * t.c() + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return r;
}

template <class T>
Tensor<T> read_image(const std::string& path) {
    return raster_to_tensor<T>(read_raster(path), 3);
}

template <class T>
void write_image(const std::string& path, const Tensor<T>& t) {
    write_raster(path, tensor_to_raster(t));
}

/// 8-bit single-channel label map; each distinct value is a label.
inline LabelMap read_label_map(const std::string& path) {
    Raster r = read_raster(path);
    if (r.channels != 1) throw ImageIoError(path + ": label map must be single-channel (PGM or gray PNG)");
    return LabelMap{r.width, r.height, std::move(r.pixels)};
}

}  // namespace hfw
