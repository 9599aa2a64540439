// Command-line front end: degrade / train / enhance / eval / bench.
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "lightdiff/lightdiff.hpp"

namespace {

using lightdiff::RunConfig;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) lightdiff::load_config_file(cfg, args.config_path);
    for (const auto& kv : args.overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects section.key=value, got '" + kv + "'");
        lightdiff::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.apply_seed(args.seed);
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (sectioned key = value)");
    cmd->add_option("--set", args.overrides, "Override a config value: section.key=value")
        ->take_all();
    cmd->add_option("--seed", args.seed, "Seed for all randomness");
}

void print_bench_report(const char* label, const lightdiff::BenchReport& r) {
    std::printf("%s: fps=%.4f params=%lld (%.2fM) resolution=%dx%d warmup=%d timed=%d\n", label,
                r.fps, static_cast<long long>(r.param_count),
                lightdiff::to_millions(r.param_count), r.height, r.width, r.warmup, r.timed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lightdiff: low-light image enhancement with a variable-resolution "
                 "denoising diffusion model"};
    app.require_subcommand(1);

    CommonArgs degrade_args, train_args, enhance_args, eval_args, bench_args;

    auto* degrade = app.add_subcommand("degrade", "Synthesize paired low-light data");
    std::string src, dst;
    degrade->add_option("--src", src, "Directory of normal-light images")->required();
    degrade->add_option("--dst", dst, "Output directory for {low,normal} pairs")->required();
    add_common(degrade, degrade_args);

    auto* train = app.add_subcommand("train", "Train denoiser + chroma balancer");
    std::string pairs_dir, out_dir, resume;
    train->add_option("--pairs", pairs_dir, "Paired dataset directory")->required();
    train->add_option("--out", out_dir, "Output directory for checkpoints and metrics")
        ->required();
    train->add_option("--resume", resume, "Checkpoint to resume from");
    add_common(train, train_args);

    auto* enhance = app.add_subcommand("enhance", "Enhance a directory of low-light images");
    std::string checkpoint, input_dir, output_dir;
    bool use_ema = false;
    enhance->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    enhance->add_option("--input", input_dir, "Directory of low-light images")->required();
    enhance->add_option("--output", output_dir, "Directory for enhanced images")->required();
    enhance->add_flag("--ema", use_ema, "Use EMA weights if present");
    add_common(enhance, enhance_args);

    auto* eval = app.add_subcommand("eval", "Score enhanced images against references");
    std::string enhanced_dir, reference_dir, report_path = "report.txt", heatmap_dir;
    eval->add_option("--enhanced", enhanced_dir, "Enhanced images")->required();
    eval->add_option("--reference", reference_dir, "Ground-truth images")->required();
    eval->add_option("--report", report_path, "Report output path");
    eval->add_option("--heatmaps", heatmap_dir, "Directory for error heatmaps");
    add_common(eval, eval_args);

    auto* bench = app.add_subcommand("bench", "Measure sampling throughput");
    int resolution = 64;
    bool compare_vanilla = false;
    std::string compare;
    bench->add_option("--resolution", resolution, "Square input resolution");
    bench->add_option("--compare", compare, "Also benchmark a baseline ('vanilla')");
    add_common(bench, bench_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*degrade) {
            RunConfig cfg = resolve_config(degrade_args);
            lightdiff::Manifest manifest = lightdiff::toolkit::cli_degrade(src, dst, cfg);
            std::printf("manifest: %s (%zu pairs, %zu errors)\n", manifest.path.c_str(),
                        manifest.entries.size(), manifest.errors.size());
        } else if (*train) {
            RunConfig cfg = resolve_config(train_args);
            auto result = lightdiff::toolkit::cli_train(pairs_dir, out_dir, cfg, resume);
            std::printf("checkpoint: %s\nmetrics: %s\nfinal_loss: %.6f\n",
                        result.checkpoint_path.c_str(), result.metrics_path.c_str(),
                        result.final_loss);
        } else if (*enhance) {
            RunConfig cfg = resolve_config(enhance_args);
            auto result =
                lightdiff::toolkit::cli_enhance(checkpoint, input_dir, output_dir, cfg, use_ema);
            std::printf("enhanced %zu images into %s\n", result.outputs.size(),
                        output_dir.c_str());
        } else if (*eval) {
            RunConfig cfg = resolve_config(eval_args);
            auto result = lightdiff::toolkit::cli_eval(enhanced_dir, reference_dir, report_path,
                                                       heatmap_dir, cfg);
            std::printf("report: %s\nmean_psnr: %s\nmean_ssim_x100: %.4f\n",
                        result.report_path.c_str(),
                        lightdiff::format_psnr(result.report.mean_psnr).c_str(),
                        result.report.mean_ssim * 100.0);
        } else if (*bench) {
            if (!compare.empty() && compare != "vanilla")
                throw std::invalid_argument("--compare only supports 'vanilla'");
            compare_vanilla = compare == "vanilla";
            RunConfig cfg = resolve_config(bench_args);
            auto result = lightdiff::toolkit::cli_bench(cfg, resolution, compare_vanilla);
            print_bench_report("light", result.light);
            if (result.compared) {
                print_bench_report("vanilla", result.vanilla);
                std::printf("param_ratio: %.4f\n", result.param_ratio);
                if (!(result.param_ratio < 0.5)) {
                    std::fprintf(stderr, "error: parameter ratio %.4f is not below 0.5\n",
                                 result.param_ratio);
                    return 2;
                }
            }
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
