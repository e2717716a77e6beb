#pragma once

// HFW1 weight files.
//
//   "HFW1"  u16 version
//   u32 length, UTF-8 key=value lines (model config + trained flags)
//   u32 tensor count, then per tensor:
//       u32 name length, name, u32 rank, rank × u32 dims, f32 values
//   u32 CRC-32 of every preceding byte
//
// All integers and floats little-endian.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/model.hpp"

namespace hfw {

class WeightFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kWeightFileVersion = 1;

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size()) throw std::invalid_argument(key + ": bad integer list '" + s + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

inline std::string serialize_model_config(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "preset=" << to_string(cfg.preset) << "\n"
       << "in_channels=" << cfg.in_channels << "\n"
       << "widths=" << detail::join_sizes(cfg.widths) << "\n"
       << "pre_pool_convs=" << detail::join_sizes(cfg.pre_pool_convs) << "\n"
       << "skip=" << to_string(cfg.skip) << "\n"
       << "single_precision=" << (cfg.single_precision ? 1 : 0) << "\n";
    return os.str();
}

/// Parses key=value lines. Unknown keys are errors; `extra` receives keys it lists.
inline ModelConfig parse_model_config(const std::string& text, std::map<std::string, std::string>* extra = nullptr) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("model config: missing '=' in '" + line + "'");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "preset") {
            const auto p = parse_preset(val);
            if (!p) throw std::invalid_argument("model config: unknown preset '" + val + "'");
            cfg.preset = *p;
        } else if (key == "in_channels") {
            const auto v = detail::split_sizes(val, key);
            if (v.size() != 1) throw std::invalid_argument("model config: in_channels takes one value");
            cfg.in_channels = v[0];
        } else if (key == "widths") {
            cfg.widths = detail::split_sizes(val, key);
        } else if (key == "pre_pool_convs") {
            cfg.pre_pool_convs = detail::split_sizes(val, key);
        } else if (key == "skip") {
            const auto s = parse_skip_variant(val);
            if (!s) throw std::invalid_argument("model config: unknown skip '" + val + "'");
            cfg.skip = *s;
        } else if (key == "single_precision") {
            cfg.single_precision = val == "1";
        } else if (extra && extra->count(key)) {
            (*extra)[key] = val;
        } else {
            throw std::invalid_argument("model config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

namespace detail {

class ByteWriter {
public:
    void u16(std::uint16_t v) { raw_le(v); }
    void u32(std::uint32_t v) { raw_le(v); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    std::vector<unsigned char>& buffer() { return buf_; }

private:
    std::vector<unsigned char> buf_;
    template <class U>
    void raw_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
};

class ByteReader {
public:
    ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
    std::uint16_t u16() { return static_cast<std::uint16_t>(raw_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(raw_le(4)); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), k);
        pos_ += k;
        return s;
    }
    [[nodiscard]] std::size_t remaining() const { return n_ - pos_; }

private:
    const unsigned char* p_;
    std::size_t n_, pos_ = 0;
    void need(std::size_t k) const {
        if (n_ - pos_ < k) throw WeightFileError("weight file: unexpected end of data");
    }
    std::uint64_t raw_le(std::size_t k) {
        need(k);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < k; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
        pos_ += k;
        return v;
    }
};

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = crc32(c, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

template <class W, class F>
void for_each_named_conv(W& w, F&& f) {
    for (std::size_t n = 0; n < w.encoder.size(); ++n)
        for (std::size_t i = 0; i < w.encoder[n].size(); ++i)
            f("enc." + std::to_string(n + 1) + "." + std::to_string(i), w.encoder[n][i]);
    for (std::size_t n = 0; n < w.decoder.size(); ++n)
        for (std::size_t i = 0; i < w.decoder[n].size(); ++i)
            f("dec." + std::to_string(n + 1) + "." + std::to_string(i), w.decoder[n][i]);
    for (std::size_t i = 0; i < w.metric_block.size(); ++i) f("metric." + std::to_string(i), w.metric_block[i]);
}

}  // namespace detail

template <class T>
std::vector<unsigned char> encode_weights(const ModelConfig& cfg, const BlockWeights<T>& w) {
    check_weights(cfg, w);
    std::string meta = serialize_model_config(cfg);
    meta += "decoder_trained=";
    for (std::size_t i = 0; i < w.decoder_trained.size(); ++i) meta += (i ? "," : "") + std::to_string(int(w.decoder_trained[i]));
    meta += "\nmetric_block=" + std::to_string(w.metric_block.empty() ? 0 : 1) + "\n";

    detail::ByteWriter out;
    out.bytes("HFW1");
    out.u16(kWeightFileVersion);
    out.u32(static_cast<std::uint32_t>(meta.size()));
    out.bytes(meta);
    std::size_t count = 0;
    detail::for_each_named_conv(w, [&](const std::string&, const ConvParams<T>&) { count += 2; });
    out.u32(static_cast<std::uint32_t>(count));
    detail::for_each_named_conv(w, [&](const std::string& name, const ConvParams<T>& p) {
        auto put = [&](const std::string& nm, const std::vector<std::uint32_t>& dims, const T* data, std::size_t n) {
            out.u32(static_cast<std::uint32_t>(nm.size()));
            out.bytes(nm);
            out.u32(static_cast<std::uint32_t>(dims.size()));
            for (auto d : dims) out.u32(d);
            for (std::size_t i = 0; i < n; ++i) out.f32(static_cast<float>(data[i]));
        };
        const auto& s = p.weight.shape();
        put(name + ".weight",
            {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h), std::uint32_t(s.w)}, p.weight.raw(),
            p.weight.numel());
        put(name + ".bias", {std::uint32_t(p.bias.size())}, p.bias.data(), p.bias.size());
    });
    auto& buf = out.buffer();
    const std::uint32_t crc = detail::crc32_of(buf.data(), buf.size());
    out.u32(crc);
    return std::move(buf);
}

template <class T>
struct LoadedWeights {
    ModelConfig config;
    BlockWeights<T> weights;
};

template <class T>
LoadedWeights<T> decode_weights(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4 + 4) throw WeightFileError("weight file: truncated (checksum cannot be verified)");
    if (std::memcmp(bytes.data(), "HFW1", 4) != 0) throw WeightFileError("weight file: bad magic (expected HFW1)");
    const std::size_t body = bytes.size() - 4;
    detail::ByteReader tail(bytes.data() + body, 4);
    if (tail.u32() != detail::crc32_of(bytes.data(), body))
        throw WeightFileError("weight file: checksum mismatch (file truncated or corrupted)");
    detail::ByteReader in(bytes.data() + 4, body - 4);
    const auto version = in.u16();
    if (version != kWeightFileVersion)
        throw WeightFileError("weight file: unsupported version " + std::to_string(version));
    const std::string meta = in.bytes(in.u32());
    std::map<std::string, std::string> extra{{"decoder_trained", ""}, {"metric_block", "0"}};
    LoadedWeights<T> lw;
    try {
        lw.config = parse_model_config(meta, &extra);
    } catch (const std::invalid_argument& e) {
        throw WeightFileError(std::string("weight file: ") + e.what());
    }
    lw.weights = zero_weights<T>(lw.config, extra["metric_block"] == "1");
    if (!extra["decoder_trained"].empty()) {
        const auto flags = detail::split_sizes(extra["decoder_trained"], "decoder_trained");
        if (flags.size() != lw.config.depth()) throw WeightFileError("weight file: decoder_trained length mismatch");
        for (std::size_t i = 0; i < flags.size(); ++i) lw.weights.decoder_trained[i] = flags[i] != 0;
    }

    std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<float>>> found;
    const std::uint32_t count = in.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = in.bytes(in.u32());
        const std::uint32_t rank = in.u32();
        if (rank > 8) throw WeightFileError("weight file: tensor '" + name + "' has implausible rank " + std::to_string(rank));
        std::vector<std::uint32_t> dims(rank);
        std::uint64_t numel = 1;
        for (auto& d : dims) {
            d = in.u32();
            numel *= d;
        }
        if (numel * 4 > in.remaining()) throw WeightFileError("weight file: tensor '" + name + "' exceeds file size");
        std::vector<float> vals(numel);
        for (auto& v : vals) v = in.f32();
        found[name] = {std::move(dims), std::move(vals)};
    }
    if (in.remaining() != 0) throw WeightFileError("weight file: trailing bytes after tensor list");

    auto dims_str = [](const std::vector<std::uint32_t>& d) {
        std::string s = "(";
        for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
        return s + ")";
    };
    std::size_t used = 0;
    detail::for_each_named_conv(lw.weights, [&](const std::string& name, ConvParams<T>& p) {
        const auto& s = p.weight.shape();
        const std::vector<std::uint32_t> wdims{std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h),
                                               std::uint32_t(s.w)};
        const std::vector<std::uint32_t> bdims{std::uint32_t(p.bias.size())};
        for (const auto& [nm, want] : {std::pair{name + ".weight", wdims}, std::pair{name + ".bias", bdims}}) {
            const auto it = found.find(nm);
            if (it == found.end()) throw WeightFileError("weight file: missing tensor '" + nm + "'");
            if (it->second.first != want)
                throw WeightFileError("weight file: shape mismatch for tensor '" + nm + "': file has " +
                                      dims_str(it->second.first) + ", config expects " + dims_str(want));
            ++used;
        }
        const auto& wv = found.at(name + ".weight").second;
        for (std::size_t i = 0; i < wv.size(); ++i) p.weight[i] = static_cast<T>(wv[i]);
        const auto& bv = found.at(name + ".bias").second;
        for (std::size_t i = 0; i < bv.size(); ++i) p.bias[i] = static_cast<T>(bv[i]);
    });
    if (used != found.size()) {
        for (const auto& [nm, _] : found)
            if (nm.rfind("enc.", 0) != 0 && nm.rfind("dec.", 0) != 0 && nm.rfind("metric.", 0) != 0)
                throw WeightFileError("weight file: unexpected tensor '" + nm + "'");
        throw WeightFileError("weight file: tensor list does not match config");
    }
    return lw;
}

template <class T>
void save_weights(const std::string& path, const ModelConfig& cfg, const BlockWeights<T>& w) {
    const auto bytes = encode_weights(cfg, w);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw WeightFileError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw WeightFileError("write failed: " + path);
}

template <class T>
LoadedWeights<T> load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WeightFileError("cannot open weight file " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_weights<T>(bytes);
    } catch (const WeightFileError& e) {
        throw WeightFileError(path + ": " + e.what());
    }
}

}  // namespace hfw
