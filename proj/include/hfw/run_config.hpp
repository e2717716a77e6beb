#pragma once

// Flat key=value run configuration shared by every CLI verb.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfw/dataset.hpp"
#include "hfw/metrics.hpp"
#include "hfw/model.hpp"
#include "hfw/stylize.hpp"
#include "hfw/training.hpp"

namespace hfw {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // model
    Preset preset = Preset::tiny;
    std::size_t depth = 3;
    std::vector<std::size_t> widths;  // empty: preset widths
    SkipVariant skip = SkipVariant::hf_residual;
    bool single_precision = true;
    bool metric_block = true;
    // training
    TrainPlan train{};
    // data
    DatasetSpec data{};
    // stylize
    StylizeOptions stylize{};
    bool allow_unmatched_labels = false;
    // metrics
    StyleLossConfig style_loss{};
    // general
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::size_t threads = 0;  // 0: HFW_THREADS, else hardware concurrency

    [[nodiscard]] ModelConfig model() const {
        ModelConfig c = preset == Preset::vgg19 ? ModelConfig::vgg19(depth) : ModelConfig::tiny(depth);
        if (!widths.empty()) {
            if (widths.size() != depth) throw ConfigError("widths must list one width per block");
            c.widths = widths;
            c.preset = Preset::custom;
        }
        c.skip = skip;
        c.single_precision = single_precision;
        c.validate();
        return c;
    }

    /// Seeds every seeded component from `seed`.
    void apply_seed() {
        train.seed = seed;
        data.seed = seed;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::size_t to_size(const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double to_double(const std::string& v) {
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("expected a number, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct KeyDef {
    std::string name, default_value, doc;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        {"preset", "tiny", "tiny | vgg19",
         [](RunConfig& c, const std::string& v) {
             const auto p = parse_preset(v);
             if (!p || *p == Preset::custom) throw ConfigError("unknown preset '" + v + "'");
             c.preset = *p;
         }},
        {"depth", "3", "number of blocks D, 3 or 4", [](RunConfig& c, const std::string& v) { c.depth = to_size(v); }},
        {"widths", "", "comma list overriding the preset reluN_1 widths",
         [](RunConfig& c, const std::string& v) {
             c.widths.clear();
             for (const auto& s : split_list(v)) c.widths.push_back(to_size(s));
         }},
        {"skip", "hf_residual", "none | max_indices | wavelet | hf_residual",
         [](RunConfig& c, const std::string& v) {
             const auto s = parse_skip_variant(v);
             if (!s) throw ConfigError("unknown skip variant '" + v + "'");
             c.skip = *s;
         }},
        {"precision", "float", "float | double",
         [](RunConfig& c, const std::string& v) {
             if (v != "float" && v != "double") throw ConfigError("precision must be float or double");
             c.single_precision = v == "float";
         }},
        {"metric_block", "true", "store the relu(D+1)_1 extension used by the style metrics",
         [](RunConfig& c, const std::string& v) { c.metric_block = to_bool(v); }},
        {"strategy", "blockwise_inward", "blockwise_inward | blockwise_outward | end_to_end | vanilla",
         [](RunConfig& c, const std::string& v) {
             const auto s = parse_strategy(v);
             if (!s) throw ConfigError("unknown strategy '" + v + "'");
             c.train.strategy = *s;
         }},
        {"epochs", "20", "epochs per blockwise stage", [](RunConfig& c, const std::string& v) { c.train.epochs = to_size(v); }},
        {"batch", "8", "minibatch size", [](RunConfig& c, const std::string& v) { c.train.batch = to_size(v); }},
        {"joint_epochs", "0", "epochs for end_to_end and vanilla; 0 means epochs * depth",
         [](RunConfig& c, const std::string& v) { c.train.joint_epochs = to_size(v); }},
        {"lr", "0.0001", "Adam learning rate", [](RunConfig& c, const std::string& v) { c.train.adam.lr = to_double(v); }},
        {"beta1", "0.9", "Adam first moment decay", [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = to_double(v); }},
        {"beta2", "0.999", "Adam second moment decay", [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = to_double(v); }},
        {"adam_eps", "1e-08", "Adam denominator epsilon", [](RunConfig& c, const std::string& v) { c.train.adam.eps = to_double(v); }},
        {"data", "synthetic", "synthetic, or a directory of ppm/pgm/png images",
         [](RunConfig& c, const std::string& v) {
             if (v == "synthetic") {
                 c.data.source = DatasetSpec::Source::synthetic;
             } else {
                 c.data.source = DatasetSpec::Source::directory;
                 c.data.directory = v;
             }
         }},
        {"data_count", "64", "synthetic corpus size", [](RunConfig& c, const std::string& v) { c.data.count = to_size(v); }},
        {"data_resize", "64", "square side after resize", [](RunConfig& c, const std::string& v) { c.data.resize = to_size(v); }},
        {"data_crop", "32", "square random crop side", [](RunConfig& c, const std::string& v) { c.data.crop = to_size(v); }},
        {"levels", "all", "transform levels, comma list of 1..D, 'all' or empty for none",
         [](RunConfig& c, const std::string& v) {
             if (v == "all") {
                 c.stylize.levels.reset();
                 return;
             }
             std::set<std::size_t> s;
             for (const auto& x : split_list(v)) s.insert(to_size(x));
             c.stylize.levels = s;
         }},
        {"zca_eps", "1e-08", "eigenvalue clamp relative to the largest eigenvalue",
         [](RunConfig& c, const std::string& v) { c.stylize.zca.eps_clamp = to_double(v); }},
        {"zca_alpha", "1", "blend between transformed and content features",
         [](RunConfig& c, const std::string& v) { c.stylize.zca.alpha = to_double(v); }},
        {"postprocess", "guided", "guided | off",
         [](RunConfig& c, const std::string& v) {
             if (v != "guided" && v != "off") throw ConfigError("postprocess must be guided or off");
             c.stylize.postprocess.enabled = v == "guided";
         }},
        {"radius", "0", "guided filter radius; 0 means max(4, round(50*min(h,w)/768))",
         [](RunConfig& c, const std::string& v) { c.stylize.postprocess.radius = to_size(v); }},
        {"gf_eps", "0.0004", "guided filter epsilon for [0,1] images",
         [](RunConfig& c, const std::string& v) { c.stylize.postprocess.eps = to_double(v); }},
        {"guide", "content", "content | stylized",
         [](RunConfig& c, const std::string& v) {
             if (v != "content" && v != "stylized") throw ConfigError("guide must be content or stylized");
             c.stylize.postprocess.guide = v == "content" ? GuideSource::content : GuideSource::stylized;
         }},
        {"cascade", "false", "use the multi-round cascade instead of the single pass",
         [](RunConfig& c, const std::string& v) { c.stylize.cascade = to_bool(v); }},
        {"allow_unmatched_labels", "false", "content labels missing from the style map use whole-image statistics",
         [](RunConfig& c, const std::string& v) { c.allow_unmatched_labels = to_bool(v); }},
        {"style_beta", "0.2,0.2,0.2,0.2,0.2", "Gram level weights for levels 1..5",
         [](RunConfig& c, const std::string& v) {
             c.style_loss.beta.clear();
             for (const auto& s : split_list(v)) c.style_loss.beta.push_back(to_double(s));
         }},
        {"lambda_reg", "100", "weight of the matting Laplacian term",
         [](RunConfig& c, const std::string& v) { c.style_loss.lambda_reg = to_double(v); }},
        {"matting_eps", "1e-07", "matting Laplacian regulariser",
         [](RunConfig& c, const std::string& v) { c.style_loss.matting_eps = to_double(v); }},
        {"reg_max_side", "64", "images are downscaled to this side for the regulariser",
         [](RunConfig& c, const std::string& v) { c.style_loss.max_side = to_size(v); }},
        {"seed", "1", "seed for data, initialisation and batch order",
         [](RunConfig& c, const std::string& v) { c.seed = to_size(v); }},
        {"out_dir", "out", "directory for artefacts", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
        {"threads", "0", "worker threads; 0 uses HFW_THREADS or all cores",
         [](RunConfig& c, const std::string& v) { c.threads = to_size(v); }},
    };
    return table;
}

}  // namespace detail

/// Sets one key. Throws ConfigError naming the key.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::key_table())
        if (k.name == key) {
            try {
                k.set(cfg, value);
            } catch (const ConfigError& e) {
                throw ConfigError("key '" + key + "': " + e.what());
            }
            return;
        }
    throw ConfigError("unknown key '" + key + "'");
}

inline RunConfig default_run_config() {
    RunConfig c;
    for (const auto& k : detail::key_table()) k.set(c, k.default_value);
    c.apply_seed();
    return c;
}

/// Applies `text` on top of `cfg`. Errors carry `source:line`.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config") {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
        const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (auto it = seen.find(key); it != seen.end())
            throw ConfigError(where + "key '" + key + "' already set on line " + std::to_string(it->second));
        seen[key] = lineno;
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    cfg.apply_seed();
}

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
    RunConfig c = default_run_config();
    apply_config_text(c, text, source);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), path);
}

/// Every key with its default and description, one `key=default  # doc` line each.
inline std::string describe_run_config() {
    std::string s;
    for (const auto& k : detail::key_table()) s += k.name + "=" + k.default_value + "  # " + k.doc + "\n";
    return s;
}

}  // namespace hfw
