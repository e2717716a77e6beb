// hfw: train, stylize, reconstruct, ablate, bench, params, metrics.
// Exit codes: 0 success, 2 usage or config error, 3 runtime or data error.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "hfw/dataset.hpp"
#include "hfw/image_io.hpp"
#include "hfw/metrics.hpp"
#include "hfw/run_config.hpp"
#include "hfw/stylize.hpp"
#include "hfw/training.hpp"
#include "hfw/weights_io.hpp"

namespace fs = std::filesystem;
using namespace hfw;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::vector<std::pair<std::string, std::string>> flags;  // explicit flag overrides, applied last

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        for (const auto& [k, v] : flags) set_config_value(cfg, k, v);
        if (seed) cfg.seed = *seed;
        cfg.apply_seed();
        return cfg;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "key=value run configuration file");
    app->add_option("--set", c.sets, "override one config key, key=value (repeatable)");
    app->add_option("--seed", c.seed, "seed for every seeded component");
}

/// Forwards a flag value to a config key when the flag was given.
template <class V>
void forward(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<V>(flag, [&c, key](const V& v) {
        std::ostringstream os;
        os << v;
        c.flags.emplace_back(key, os.str());
    }, help);
}

std::size_t resolve_threads(const RunConfig& cfg) {
    if (cfg.threads) return cfg.threads;
    if (const char* env = std::getenv("HFW_THREADS")) {
        try {
            const auto n = detail::to_size(env);
            if (n) return n;
        } catch (const ConfigError&) {
            throw ConfigError(std::string("HFW_THREADS: expected a positive integer, got '") + env + "'");
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

/// Runs jobs 0..n-1 on up to `threads` workers; results land by index.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

void print_table(std::ostream& os, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            os << r[i];
            if (i + 1 < r.size()) os << std::string(width[i] - r[i].size() + 2, ' ');
        }
        os << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
}

template <class T>
BlockWeights<T> load_model(const std::string& path, ModelConfig& cfg) {
    auto lw = load_weights<float>(path);
    cfg = lw.config;
    if constexpr (std::is_same_v<T, float>) {
        return lw.weights;
    } else {
        return cast_weights<T>(lw.weights);
    }
}

// ---- train -------------------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string out, log;
};

template <class T>
int run_train(const RunConfig& rc, const TrainArgs& a) {
    const auto cfg = rc.model();
    const auto data = load_dataset<T>(rc.data);
    const std::string out = a.out.empty() ? (fs::path(rc.out_dir) / "weights.hfw").string() : a.out;
    const std::string log = a.log.empty() ? out + ".log" : a.log;
    ensure_parent(out);
    ensure_parent(log);
    std::ofstream lf(log, std::ios::app);
    if (!lf) throw std::runtime_error(log + ": cannot open log");
    auto w = init_weights<T>(cfg, rc.seed, rc.metric_block);
    w = train(data, cfg, std::move(w), rc.train, [&](const EpochLog& e) {
        const std::string line = e.strategy + " stage=" + std::to_string(e.stage) + " epoch=" +
                                 std::to_string(e.epoch) + " loss=" + fmt(e.mean_loss, 9);
        lf << line << "\n";
        lf.flush();
        std::cout << line << std::endl;
    });
    save_weights(out, cfg, w);
    std::cout << "wrote " << out << "\n";
    return 0;
}

// ---- stylize -------------------------------------------------------------------------

struct StylizeArgs {
    Common common;
    std::string content, style, weights, out, labels_content, labels_style;
    bool no_postprocess = false, cascade = false, allow_unmatched = false;
};

template <class T>
int run_stylize(const RunConfig& rc, const StylizeArgs& a) {
    ModelConfig cfg;
    const auto w = load_model<T>(a.weights, cfg);
    const auto content = read_image<T>(a.content);
    const auto style = read_image<T>(a.style);
    StylizeOptions opts = rc.stylize;
    if (a.no_postprocess) opts.postprocess.enabled = false;
    if (a.cascade) opts.cascade = true;
    if (a.labels_content.empty() != a.labels_style.empty())
        throw UsageError("--labels-content and --labels-style must be given together");
    if (!a.labels_content.empty()) {
        opts.content_labels = read_label_map(a.labels_content);
        opts.style_labels = read_label_map(a.labels_style);
        const auto missing = unmatched_labels(*opts.content_labels, *opts.style_labels);
        if (!missing.empty() && !(a.allow_unmatched || rc.allow_unmatched_labels)) {
            std::string list;
            for (auto l : missing) list += (list.empty() ? "" : ",") + std::to_string(l);
            throw std::runtime_error("content labels missing from the style label map: " + list +
                                     " (pass --allow-unmatched-labels to use whole-image statistics for them)");
        }
    }
    const auto sf = prepare_style(style, cfg, w, opts.zca);
    const auto r = run_stylize(content, sf, cfg, w, opts);
    const std::string out = a.out.empty() ? (fs::path(rc.out_dir) / "stylized.ppm").string() : a.out;
    ensure_parent(out);
    write_image(out, r.image);
    std::cout << "wrote " << out << "\n"
              << "transforms=" << r.transforms << "\n"
              << "timing_ms encode=" << fmt(1e3 * r.timing.encode, 4) << " transforms=" << fmt(1e3 * r.timing.transforms, 4)
              << " decode=" << fmt(1e3 * r.timing.decode, 4) << " postprocess=" << fmt(1e3 * r.timing.postprocess, 4)
              << " total=" << fmt(1e3 * r.timing.total(), 4) << "\n";
    return 0;
}

// ---- reconstruct -----------------------------------------------------------------------

struct ReconstructArgs {
    Common common;
    std::string weights, input, out;
    bool report_taps = false;
};

void print_report(const ReconReport& rep, std::ostream& os) {
    std::vector<std::string> row;
    for (double v : rep.values) row.push_back(fmt(v));
    print_table(os, rep.columns, {row});
}

template <class T>
int run_reconstruct(const RunConfig& rc, const ReconstructArgs& a) {
    ModelConfig cfg;
    const auto w = load_model<T>(a.weights, cfg);
    if (!w.fully_trained()) throw std::runtime_error(a.weights + ": decoder is not fully trained");
    if (!a.input.empty()) {
        const auto img = read_image<T>(a.input);
        if (!a.out.empty()) {
            ensure_parent(a.out);
            write_image(a.out, clamp01(reconstruct(img, cfg, w)));
            std::cout << "wrote " << a.out << "\n";
        }
        if (a.report_taps) print_report(reconstruction_report(std::vector<Tensor<T>>{img}, cfg, w), std::cout);
        return 0;
    }
    if (!a.report_taps) throw UsageError("reconstruct needs --input or --report-taps");
    print_report(reconstruction_report(load_dataset<T>(rc.data), cfg, w), std::cout);
    return 0;
}

// ---- ablate ---------------------------------------------------------------------------

struct AblateArgs {
    Common common;
    std::string axis = "skip", seeds = "1", out;
    std::size_t eval_count = 16;
};

template <class T>
int run_ablate(const RunConfig& rc, const AblateArgs& a) {
    std::vector<std::string> rows;
    if (a.axis == "skip")
        rows = {"none", "max_indices", "wavelet", "hf_residual"};
    else if (a.axis == "strategy")
        rows = {"blockwise_inward", "blockwise_outward", "end_to_end", "vanilla"};
    else
        throw UsageError("--axis must be skip or strategy");
    std::vector<std::uint64_t> seeds;
    for (const auto& s : detail::split_list(a.seeds)) seeds.push_back(detail::to_size(s));
    if (seeds.empty()) throw UsageError("--seeds is empty");

    const std::size_t jobs = rows.size() * seeds.size();
    std::vector<ReconReport> results(jobs);
    std::mutex log_mu;
    parallel_for(jobs, resolve_threads(rc), [&](std::size_t j) {
        RunConfig v = rc;
        set_config_value(v, a.axis == "skip" ? "skip" : "strategy", rows[j / seeds.size()]);
        v.seed = seeds[j % seeds.size()];
        v.apply_seed();
        const auto cfg = v.model();
        const auto data = load_dataset<T>(v.data);
        DatasetSpec eval = v.data;
        eval.source = DatasetSpec::Source::synthetic;
        eval.count = a.eval_count;
        eval.seed = v.seed + 1000;
        const auto w = train(data, cfg, init_weights<T>(cfg, v.seed), v.train);
        results[j] = reconstruction_report(load_dataset<T>(eval), cfg, w);
        std::lock_guard lock(log_mu);
        std::cerr << "done " << rows[j / seeds.size()] << " seed=" << v.seed << "\n";
    });

    std::vector<std::string> header{"variant"};
    for (const auto& c : results[0].columns) header.push_back(c);
    std::vector<std::vector<std::string>> table;
    std::ostringstream kv;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<double> mean(results[0].values.size(), 0.0);
        for (std::size_t s = 0; s < seeds.size(); ++s)
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += results[r * seeds.size() + s].values[k];
        std::vector<std::string> line{rows[r]};
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean[k] /= double(seeds.size());
            line.push_back(fmt(mean[k]));
            kv << rows[r] << "." << header[k + 1] << "=" << fmt(mean[k], 12) << "\n";
        }
        table.push_back(line);
    }
    print_table(std::cout, header, table);
    const std::string out = a.out.empty() ? (fs::path(rc.out_dir) / ("ablate_" + a.axis + ".txt")).string() : a.out;
    ensure_parent(out);
    std::ofstream(out) << "axis=" << a.axis << "\nseeds=" << a.seeds << "\n" << kv.str();
    std::cout << "wrote " << out << "\n";
    return 0;
}

// ---- bench -----------------------------------------------------------------------------

struct BenchArgs {
    Common common;
    std::string sizes = "64,128,256", weights;
    std::size_t runs = 5;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class T>
int run_bench(const RunConfig& rc, const BenchArgs& a) {
    if (a.runs < 5) throw UsageError("--runs must be >= 5");
    ModelConfig cfg = rc.model();
    BlockWeights<T> w;
    if (a.weights.empty()) {
        w = init_weights<T>(cfg, rc.seed);
        w.decoder_trained.assign(cfg.depth(), true);
    } else {
        w = load_model<T>(a.weights, cfg);
    }
    StylizeOptions opts = rc.stylize;
    opts.postprocess.enabled = false;
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : detail::split_list(a.sizes)) {
        const std::size_t side = detail::to_size(s);
        try {
            std::mt19937_64 rng(rc.seed + side);
            const auto content = synthetic_image<T>(side, side, rng);
            const auto style = synthetic_image<T>(side, side, rng);
            const auto sf = prepare_style(style, cfg, w, opts.zca);
            std::vector<double> single, cascade;
            for (std::size_t r = 0; r < a.runs; ++r) {
                auto t0 = std::chrono::steady_clock::now();
                (void)stylize(content, sf, cfg, w, opts);
                single.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
                t0 = std::chrono::steady_clock::now();
                (void)stylize_cascade(content, sf, cfg, w, opts);
                cascade.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            }
            const double ms = median(single), mc = median(cascade);
            rows.push_back({s, fmt(1e3 * ms, 4), fmt(1e3 * mc, 4), fmt(mc / ms, 3)});
        } catch (const std::bad_alloc&) {
            rows.push_back({s, "OOM", "OOM", "-"});
        }
        std::cout.flush();
    }
    print_table(std::cout, {"size", "stylize_ms", "cascade_ms", "cascade/stylize"}, rows);
    return 0;
}

// ---- params ---------------------------------------------------------------------------

int run_params(const RunConfig& rc) {
    const auto cfg = rc.model();
    const auto pc = count_parameters(cfg);
    std::cout << "preset=" << to_string(cfg.preset) << "\ndepth=" << cfg.depth() << "\nparameters=" << pc.total
              << "\nmainstream_layers=" << pc.mainstream_layers << "\n";
    return 0;
}

// ---- metrics --------------------------------------------------------------------------

struct MetricsArgs {
    Common common;
    std::string methods, pairs, weights, out;
};

template <class T>
Tensor<T> read_output(const fs::path& dir, const std::string& id) {
    for (const char* ext : {".ppm", ".png", ".pgm"}) {
        const auto p = dir / (id + ext);
        if (fs::exists(p)) return read_image<T>(p.string());
    }
    throw ImageIoError(dir.string() + ": no output for pair '" + id + "'");
}

template <class T>
int run_metrics(const RunConfig& rc, const MetricsArgs& a) {
    ModelConfig cfg;
    const auto w = load_model<T>(a.weights, cfg);
    const auto methods = detail::split_list(a.methods);
    if (methods.size() < 2) throw UsageError("--methods needs at least two directories");
    struct Pair {
        std::string id, content, style;
    };
    std::vector<Pair> pairs;
    {
        std::ifstream f(a.pairs);
        if (!f) throw std::runtime_error(a.pairs + ": cannot open pair list");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
            std::istringstream is(line);
            Pair p;
            if (!(is >> p.id)) continue;
            if (!(is >> p.content >> p.style))
                throw std::runtime_error(a.pairs + ":" + std::to_string(lineno) + ": expected 'id content style'");
            pairs.push_back(p);
        }
    }
    if (pairs.empty()) throw std::runtime_error(a.pairs + ": no pairs");

    const std::size_t M = methods.size(), P = pairs.size();
    std::vector<std::vector<double>> raw(M, std::vector<double>(P)), per_pixel(M, std::vector<double>(P));
    std::vector<double> downscale(P, 1.0);
    bool renormalized = false;
    parallel_for(M * P, resolve_threads(rc), [&](std::size_t j) {
        const std::size_t m = j / P, p = j % P;
        const auto content = read_image<T>(pairs[p].content);
        const auto style = read_image<T>(pairs[p].style);
        const auto out = read_output<T>(methods[m], pairs[p].id);
        const auto r = regularized_style_loss(out, content, style, cfg, w, rc.style_loss);
        raw[m][p] = r.total_raw;
        per_pixel[m][p] = r.total_per_pixel;
        if (m == 0) {
            downscale[p] = r.downscale;
            if (p == 0) renormalized = r.gram.renormalized;
        }
    });
    const auto ns = normalize_losses(raw);
    const auto np = normalize_losses(per_pixel);

    std::vector<std::vector<std::string>> table;
    std::ostringstream kv;
    for (std::size_t m = 0; m < M; ++m) {
        double mean_raw = 0;
        for (double v : raw[m]) mean_raw += v / double(P);
        table.push_back({methods[m], fmt(mean_raw), fmt(ns.method_mean[m]), fmt(np.method_mean[m])});
        kv << "method." << m << ".dir=" << methods[m] << "\nmethod." << m << ".raw_mean=" << fmt(mean_raw, 12)
           << "\nmethod." << m << ".normalized=" << fmt(ns.method_mean[m], 12) << "\nmethod." << m
           << ".normalized_per_pixel=" << fmt(np.method_mean[m], 12) << "\n";
        for (std::size_t p = 0; p < P; ++p)
            kv << "pair." << pairs[p].id << ".method." << m << ".raw=" << fmt(raw[m][p], 12) << "\npair."
               << pairs[p].id << ".method." << m << ".normalized=" << fmt(ns.normalized[m][p], 12) << "\n";
    }
    print_table(std::cout, {"method", "raw_mean", "normalized", "normalized_per_pixel"}, table);
    if (renormalized) std::cout << "note: Gram weights renormalized over the available levels\n";
    for (std::size_t p = 0; p < P; ++p)
        if (downscale[p] != 1.0)
            std::cout << "note: pair " << pairs[p].id << " regulariser downscaled by " << fmt(downscale[p], 4) << "\n";
    const std::string out = a.out.empty() ? (fs::path(rc.out_dir) / "metrics.txt").string() : a.out;
    ensure_parent(out);
    std::ofstream(out) << "pairs=" << P << "\nmethods=" << M << "\n" << kv.str();
    std::cout << "wrote " << out << "\n";
    return 0;
}

template <class F>
int with_precision(bool single, F&& f) {
    return single ? f(float{}) : f(double{});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hfw: photorealistic style transfer with a blockwise wavelet autoencoder"};
    app.require_subcommand(0, 1);
    app.set_help_all_flag("--help-all");
    bool describe = false;
    app.add_flag("--describe-config", describe, "print every config key with its default");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train decoder blocks and write a weight file");
    add_common(train_cmd, ta.common);
    forward<std::string>(train_cmd, ta.common, "--strategy", "strategy", "training strategy");
    forward<std::string>(train_cmd, ta.common, "--preset", "preset", "tiny or vgg19");
    forward<std::string>(train_cmd, ta.common, "--skip", "skip", "skip variant");
    forward<std::string>(train_cmd, ta.common, "--epochs", "epochs", "epochs per stage");
    forward<std::string>(train_cmd, ta.common, "--batch", "batch", "minibatch size");
    forward<std::string>(train_cmd, ta.common, "--lr", "lr", "Adam learning rate");
    forward<std::string>(train_cmd, ta.common, "--data", "data", "image directory");
    train_cmd->add_flag_callback("--synthetic", [&] { ta.common.flags.emplace_back("data", "synthetic"); },
                                 "use the seeded synthetic corpus");
    train_cmd->add_option("--out", ta.out, "weight file path");
    train_cmd->add_option("--log", ta.log, "training log path (appended)");

    StylizeArgs sa;
    auto* stylize_cmd = app.add_subcommand("stylize", "stylize a content image with a style image");
    add_common(stylize_cmd, sa.common);
    stylize_cmd->add_option("--content", sa.content, "content image")->required();
    stylize_cmd->add_option("--style", sa.style, "style image")->required();
    stylize_cmd->add_option("--weights", sa.weights, "weight file")->required();
    stylize_cmd->add_option("--out", sa.out, "output image");
    forward<std::string>(stylize_cmd, sa.common, "--levels", "levels", "comma list of levels, 'all' or \"\"");
    stylize_cmd->add_option("--labels-content", sa.labels_content, "content label map (single channel)");
    stylize_cmd->add_option("--labels-style", sa.labels_style, "style label map (single channel)");
    stylize_cmd->add_flag("--allow-unmatched-labels", sa.allow_unmatched,
                          "content labels absent from the style map use whole-image statistics");
    stylize_cmd->add_flag("--no-postprocess", sa.no_postprocess, "skip the guided filter");
    stylize_cmd->add_flag("--cascade", sa.cascade, "multi-round cascade instead of the single pass");
    forward<std::string>(stylize_cmd, sa.common, "--radius", "radius", "guided filter radius");
    forward<std::string>(stylize_cmd, sa.common, "--eps", "gf_eps", "guided filter epsilon");
    forward<std::string>(stylize_cmd, sa.common, "--guide", "guide", "content or stylized");
    forward<std::string>(stylize_cmd, sa.common, "--alpha", "zca_alpha", "transform blend");

    ReconstructArgs ra;
    auto* recon_cmd = app.add_subcommand("reconstruct", "encode and decode without transforms");
    add_common(recon_cmd, ra.common);
    recon_cmd->add_option("--weights", ra.weights, "weight file")->required();
    recon_cmd->add_option("--input", ra.input, "input image");
    recon_cmd->add_option("--out", ra.out, "output image");
    recon_cmd->add_flag("--report-taps", ra.report_taps, "print relative tap losses and image loss");

    AblateArgs aa;
    auto* ablate_cmd = app.add_subcommand("ablate", "train a variant grid and report reconstruction losses");
    add_common(ablate_cmd, aa.common);
    ablate_cmd->add_option("--axis", aa.axis, "skip or strategy")->check(CLI::IsMember({"skip", "strategy"}));
    ablate_cmd->add_option("--seeds", aa.seeds, "comma list of seeds to average over");
    ablate_cmd->add_option("--eval-count", aa.eval_count, "held-out synthetic images for the report");
    ablate_cmd->add_option("--out", aa.out, "report file");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "median stylize and cascade wall-clock per size");
    add_common(bench_cmd, ba.common);
    bench_cmd->add_option("--sizes", ba.sizes, "comma list of square sizes");
    bench_cmd->add_option("--runs", ba.runs, "runs per size (>= 5)");
    bench_cmd->add_option("--weights", ba.weights, "weight file (default: seeded untrained weights)");
    forward<std::string>(bench_cmd, ba.common, "--threads", "threads", "worker threads");

    Common pc;
    auto* params_cmd = app.add_subcommand("params", "parameter and layer counts");
    add_common(params_cmd, pc);
    forward<std::string>(params_cmd, pc, "--preset", "preset", "tiny or vgg19");
    forward<std::string>(params_cmd, pc, "--depth", "depth", "3 or 4");

    MetricsArgs ma;
    auto* metrics_cmd = app.add_subcommand("metrics", "regularized style loss with per-pair normalization");
    add_common(metrics_cmd, ma.common);
    metrics_cmd->add_option("--methods", ma.methods, "comma list of method output directories")->required();
    metrics_cmd->add_option("--pairs", ma.pairs, "pair list file, lines of 'id content style'")->required();
    metrics_cmd->add_option("--weights", ma.weights, "weight file for the Gram encoder")->required();
    metrics_cmd->add_option("--out", ma.out, "report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (describe) {
        std::cout << describe_run_config();
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << "A subcommand is required\n" << app.help();
        return 2;
    }

    try {
        if (*train_cmd) {
            const auto rc = ta.common.resolve();
            return with_precision(rc.single_precision, [&](auto t) { return run_train<decltype(t)>(rc, ta); });
        }
        if (*stylize_cmd) {
            const auto rc = sa.common.resolve();
            return with_precision(rc.single_precision, [&](auto t) { return run_stylize<decltype(t)>(rc, sa); });
        }
        if (*recon_cmd) {
            const auto rc = ra.common.resolve();
            return with_precision(rc.single_precision, [&](auto t) { return run_reconstruct<decltype(t)>(rc, ra); });
        }
        if (*ablate_cmd) {
            const auto rc = aa.common.resolve();
            return with_precision(rc.single_precision, [&](auto t) { return run_ablate<decltype(t)>(rc, aa); });
        }
        if (*bench_cmd) {
            auto rc = ba.common.resolve();
            if (!rc.threads) rc.threads = 1;
            return with_precision(rc.single_precision, [&](auto t) { return run_bench<decltype(t)>(rc, ba); });
        }
        if (*params_cmd) return run_params(pc.resolve());
        if (*metrics_cmd) {
            const auto rc = ma.common.resolve();
            return with_precision(rc.single_precision, [&](auto t) { return run_metrics<decltype(t)>(rc, ma); });
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
