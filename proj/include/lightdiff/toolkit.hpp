#ifndef LIGHTDIFF_TOOLKIT_HPP
#define LIGHTDIFF_TOOLKIT_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "lightdiff/checkpoint.hpp"
#include "lightdiff/config.hpp"
#include "lightdiff/degrade.hpp"
#include "lightdiff/image_io.hpp"
#include "lightdiff/metrics.hpp"
#include "lightdiff/tdiff.hpp"
#include "lightdiff/trainer.hpp"

namespace lightdiff::toolkit {

using Real = float;  // runtime scalar

namespace fs = std::filesystem;

inline std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("directory not found: " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

/// Loads the pairs_dir/{low,normal} layout produced by the degrade command.
/// The two file sets must match exactly.
inline std::vector<TrainPair<Real>> load_pairs(const std::string& pairs_dir) {
    auto low_names = list_images((fs::path(pairs_dir) / "low").string());
    auto normal_names = list_images((fs::path(pairs_dir) / "normal").string());
    if (low_names != normal_names) {
        std::set<std::string> low_set(low_names.begin(), low_names.end());
        std::set<std::string> normal_set(normal_names.begin(), normal_names.end());
        std::string diff;
        for (const auto& n : low_set)
            if (!normal_set.count(n)) diff += " low-only:" + n;
        for (const auto& n : normal_set)
            if (!low_set.count(n)) diff += " normal-only:" + n;
        throw std::runtime_error("pair directories disagree:" + diff);
    }
    std::vector<TrainPair<Real>> pairs;
    for (const auto& name : low_names) {
        TrainPair<Real> p;
        p.low = load_image<Real>((fs::path(pairs_dir) / "low" / name).string());
        p.normal = load_image<Real>((fs::path(pairs_dir) / "normal" / name).string());
        p.id = name;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

inline Manifest cli_degrade(const std::string& src_dir, const std::string& dst_dir,
                            const RunConfig& cfg) {
    return build_pair_dataset<Real>(src_dir, dst_dir, cfg.degrade);
}

inline FitResult cli_train(const std::string& pairs_dir, const std::string& out_dir,
                           const RunConfig& cfg, const std::string& resume = "") {
    auto pairs = load_pairs(pairs_dir);
    if (pairs.empty()) throw std::runtime_error("no training pairs in " + pairs_dir);
    const int h = pairs[0].normal.height(), w = pairs[0].normal.width();
    NoiseSchedule ns = cfg.schedule.noise();
    ResolutionSchedule rs = cfg.schedule.resolution(h, w);
    DenoiserNetwork<Real> net(cfg.network, cfg.seed);
    ChromaBalancer<Real> cb(cfg.chroma, cfg.seed + 1);
    return fit(cfg.train, pairs, ns, rs, net, cb, out_dir, serialize_config(cfg), resume);
}

struct EnhanceResult {
    std::vector<std::string> outputs;
};

/// Restores networks from a checkpoint and runs the sampler on every image
/// in input_dir. Each image gets its own substream of --seed, so outputs
/// are reproducible and independent of processing order.
inline EnhanceResult cli_enhance(const std::string& checkpoint_path, const std::string& input_dir,
                                 const std::string& output_dir, const RunConfig& cfg,
                                 bool use_ema = false) {
    CheckpointData data = load_checkpoint(checkpoint_path);
    NoiseSchedule ns = checkpoint_noise_schedule(data);
    DenoiserNetwork<Real> net(data.net_config);
    ChromaBalancer<Real> cb(data.chroma_config);
    auto params = net.parameters("denoiser");
    {
        auto cbp = cb.parameters("chroma");
        params.insert(params.end(), cbp.begin(), cbp.end());
    }
    if (use_ema) {
        std::map<std::string, TensorT<Real>> shadow;
        restore_ema(data, shadow);
        if (shadow.empty())
            throw std::runtime_error("checkpoint has no EMA weights (train with ema_decay > 0)");
        for (auto& np : params) {
            auto it = shadow.find(np.name);
            if (it == shadow.end())
                throw std::runtime_error("checkpoint: missing EMA weights for " + np.name);
            np.param->value = it->second;
        }
    } else {
        restore_parameters(data, params);
    }

    auto names = list_images(input_dir);
    if (names.empty()) throw std::runtime_error("no input images in " + input_dir);
    fs::create_directories(output_dir);
    NoiseStream root(cfg.seed);
    EnhanceResult result;
    for (size_t i = 0; i < names.size(); ++i) {
        TensorT<Real> condition = load_image<Real>((fs::path(input_dir) / names[i]).string());
        ResolutionSchedule rs = resolution_schedule_with_boundaries(
            ns.steps, condition.height(), condition.width(), data.boundaries);
        NoiseStream stream = root.substream(i);
        TensorT<Real> enhanced = sample(condition, net, cb, ns, rs, stream, cfg.sample);
        std::string out_path = (fs::path(output_dir) / names[i]).string();
        save_image(out_path, enhanced);
        result.outputs.push_back(out_path);
    }
    return result;
}

struct EvalResult {
    QualityReport report;
    std::string report_path;
};

/// Scores enhanced_dir against reference_dir (matched filenames), writes a
/// structured report and, when heatmap_dir is nonempty, a reconstruction
/// error heatmap per image.
inline EvalResult cli_eval(const std::string& enhanced_dir, const std::string& reference_dir,
                           const std::string& report_path, const std::string& heatmap_dir,
                           const RunConfig& cfg) {
    auto enhanced = list_images(enhanced_dir);
    auto reference = list_images(reference_dir);
    if (enhanced != reference) {
        std::set<std::string> e(enhanced.begin(), enhanced.end());
        std::set<std::string> r(reference.begin(), reference.end());
        std::string diff;
        for (const auto& n : e)
            if (!r.count(n)) diff += " enhanced-only:" + n;
        for (const auto& n : r)
            if (!e.count(n)) diff += " reference-only:" + n;
        throw std::runtime_error("image sets disagree:" + diff);
    }
    if (enhanced.empty()) throw std::runtime_error("no images to evaluate in " + enhanced_dir);
    if (!heatmap_dir.empty()) fs::create_directories(heatmap_dir);
    EvalResult result;
    for (const auto& name : enhanced) {
        TensorT<double> cand = load_image<double>((fs::path(enhanced_dir) / name).string());
        TensorT<double> ref = load_image<double>((fs::path(reference_dir) / name).string());
        QualityRow row;
        row.name = name;
        row.psnr = psnr(ref, cand);
        row.ssim = ssim(ref, cand);
        result.report.rows.push_back(row);
        if (!heatmap_dir.empty())
            save_image((fs::path(heatmap_dir) / name).string(), error_heatmap(ref, cand));
    }
    result.report.finalize();
    std::string header = "seed " + std::to_string(cfg.seed) + "\n" + serialize_config(cfg);
    std::string text = quality_report_text(result.report, header);
    if (!report_path.empty()) {
        std::ofstream os(report_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write report " + report_path);
        os << text;
    }
    result.report_path = report_path;
    return result;
}

struct BenchResult {
    BenchReport light;
    BenchReport vanilla;
    bool compared = false;
    double param_ratio = 0;
};

/// Benchmarks sampling throughput for the configured model at the given
/// square resolution; with compare_vanilla also runs the constant-resolution
/// attention baseline and reports the parameter ratio.
inline BenchResult cli_bench(const RunConfig& cfg, int resolution, bool compare_vanilla) {
    if (resolution < 4 || resolution % 4 != 0)
        throw std::invalid_argument("bench: resolution must be divisible by 4 (two exact "
                                    "halvings of the timeline)");
    NoiseSchedule ns = cfg.schedule.noise();
    BenchResult result;
    {
        ResolutionSchedule rs = cfg.schedule.resolution(resolution, resolution);
        DenoiserNetwork<Real> net(cfg.network, cfg.seed);
        ChromaBalancer<Real> cb(cfg.chroma, cfg.seed + 1);
        result.light =
            fps_bench(net, cb, ns, rs, cfg.bench.warmup, cfg.bench.timed, cfg.seed, cfg.sample);
    }
    if (compare_vanilla) {
        NetworkConfig vanilla = NetworkConfig::vanilla_baseline();
        vanilla.image_channels = cfg.network.image_channels;
        ResolutionSchedule rs = constant_resolution_schedule(ns.steps, resolution, resolution);
        DenoiserNetwork<Real> net(vanilla, cfg.seed);
        ChromaBalancer<Real> cb(cfg.chroma, cfg.seed + 1);  // inert: identity at init
        result.vanilla =
            fps_bench(net, cb, ns, rs, cfg.bench.warmup, cfg.bench.timed, cfg.seed, cfg.sample);
        result.compared = true;
        result.param_ratio = static_cast<double>(result.light.param_count) /
                             static_cast<double>(result.vanilla.param_count);
    }
    return result;
}

}  // namespace lightdiff::toolkit

#endif
