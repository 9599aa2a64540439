#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "lightdiff/toolkit.hpp"
#include "test_support.hpp"

using namespace lightdiff;
using namespace testsupport;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

// micro setup shared by the pipeline tests: tiny model, tiny schedule
RunConfig micro_config() {
    RunConfig cfg;
    cfg.schedule.steps = 8;
    cfg.schedule.beta_start = 0.02;
    cfg.schedule.beta_end = 0.2;
    cfg.schedule.mode = ScheduleSpec::BoundaryMode::custom;
    cfg.schedule.custom_boundaries = {2, 4};
    cfg.network.base_channels = 4;
    cfg.network.channel_multipliers = {1, 2};
    cfg.network.blocks_per_level = 1;
    cfg.train.iterations = 4;
    cfg.train.batch_size = 2;
    cfg.train.checkpoint_interval = 4;
    cfg.apply_seed(5);
    return cfg;
}

}  // namespace

TEST_CASE("config text parses with overrides and rejects unknown keys") {
    RunConfig cfg;
    parse_config_text(cfg, R"(
# comment
[schedule]
steps = 40
beta_end = 0.1
boundaries = 10,20

[network]
base_channels = 16
channel_multipliers = 1, 2, 2

[train]
learning_rate = 0.001
)");
    REQUIRE(cfg.schedule.steps == 40);
    REQUIRE(cfg.schedule.beta_end == 0.1);
    REQUIRE(cfg.schedule.mode == ScheduleSpec::BoundaryMode::custom);
    REQUIRE(cfg.schedule.custom_boundaries == std::vector<int>{10, 20});
    REQUIRE(cfg.network.base_channels == 16);
    REQUIRE(cfg.network.channel_multipliers == std::vector<int>{1, 2, 2});
    REQUIRE(cfg.train.learning_rate == 0.001);

    try {
        parse_config_text(cfg, "[train]\nlr = 0.1\n");
        FAIL("expected unknown-key error");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("train.lr") != std::string::npos);
    }
    REQUIRE_THROWS_AS(parse_config_text(cfg, "steps = 4\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config_text(cfg, "[schedule]\nsteps = abc\n"),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(apply_config_value(cfg, "sample.upsample", "cubic"),
                      std::invalid_argument);
}

TEST_CASE("serialized config round-trips to the same canonical text") {
    RunConfig cfg = micro_config();
    cfg.train.ema_decay = 0.99;
    cfg.sample.upsample = UpsampleMode::nearest;
    std::string text = serialize_config(cfg);
    RunConfig back;
    parse_config_text(back, text);
    back.apply_seed(cfg.seed);
    REQUIRE(serialize_config(back) == text);
}

TEST_CASE("the degrade/train/enhance/eval pipeline holds together") {
    TempDir src("lightdiff_tk_src"), pairs("lightdiff_tk_pairs"), run("lightdiff_tk_run"),
        out("lightdiff_tk_out"), out2("lightdiff_tk_out2"), heat("lightdiff_tk_heat");
    for (int i = 0; i < 3; ++i)
        save_image((src.path / ("img" + std::to_string(i) + ".png")).string(),
                   procedural_image<float>(16, 16, 400 + static_cast<uint64_t>(i)));

    RunConfig cfg = micro_config();
    Manifest manifest = toolkit::cli_degrade(src.path.string(), pairs.path.string(), cfg);
    REQUIRE(manifest.entries.size() == 3);

    FitResult fitres = toolkit::cli_train(pairs.path.string(), run.path.string(), cfg);
    REQUIRE(fs::exists(fitres.checkpoint_path));
    REQUIRE(fs::exists(fitres.metrics_path));

    auto enh = toolkit::cli_enhance(fitres.checkpoint_path, (pairs.path / "low").string(),
                                    out.path.string(), cfg);
    REQUIRE(enh.outputs.size() == 3);
    for (const auto& e : manifest.entries) {
        REQUIRE(fs::exists(out.path / e.filename));
        TensorT<float> img = load_image<float>((out.path / e.filename).string());
        REQUIRE(img.shape == std::vector<int>{3, 16, 16});
    }

    // same seed: byte-identical outputs
    toolkit::cli_enhance(fitres.checkpoint_path, (pairs.path / "low").string(),
                         out2.path.string(), cfg);
    for (const auto& e : manifest.entries)
        REQUIRE(read_bytes(out.path / e.filename) == read_bytes(out2.path / e.filename));

    auto eval = toolkit::cli_eval(out.path.string(), (pairs.path / "normal").string(),
                                  (run.path / "report.txt").string(), heat.path.string(), cfg);
    REQUIRE(eval.report.count == 3);
    REQUIRE(fs::exists(run.path / "report.txt"));
    for (const auto& e : manifest.entries) REQUIRE(fs::exists(heat.path / e.filename));

    // self-evaluation hits the zero-error sentinels
    auto self_eval = toolkit::cli_eval((pairs.path / "normal").string(),
                                       (pairs.path / "normal").string(), "", "", cfg);
    for (const auto& row : self_eval.report.rows) {
        REQUIRE(std::isinf(row.psnr));
        REQUIRE(row.ssim == 1.0);
    }
}

TEST_CASE("eval rejects mismatched image sets, naming the difference") {
    TempDir a("lightdiff_tk_eva"), b("lightdiff_tk_evb");
    save_image((a.path / "one.png").string(), procedural_image<float>(16, 16, 1));
    save_image((a.path / "two.png").string(), procedural_image<float>(16, 16, 2));
    save_image((b.path / "one.png").string(), procedural_image<float>(16, 16, 3));
    save_image((b.path / "three.png").string(), procedural_image<float>(16, 16, 4));
    RunConfig cfg;
    try {
        toolkit::cli_eval(a.path.string(), b.path.string(), "", "", cfg);
        FAIL("expected mismatch error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("two.png") != std::string::npos);
        REQUIRE(msg.find("three.png") != std::string::npos);
    }
}

TEST_CASE("training surfaces dataset problems before building the model") {
    TempDir pairs("lightdiff_tk_badpairs");
    RunConfig cfg = micro_config();
    REQUIRE_THROWS_AS(toolkit::cli_train(pairs.path.string(), "/tmp/never", cfg),
                      std::runtime_error);

    fs::create_directories(pairs.path / "low");
    fs::create_directories(pairs.path / "normal");
    save_image((pairs.path / "low" / "a.png").string(), procedural_image<float>(16, 16, 1));
    try {
        toolkit::cli_train(pairs.path.string(), "/tmp/never", cfg);
        FAIL("expected mismatch error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("a.png") != std::string::npos);
    }
}

TEST_CASE("enhance refuses a corrupted checkpoint and leaves no outputs") {
    TempDir dir("lightdiff_tk_corrupt"), input("lightdiff_tk_ci");
    save_image((input.path / "a.png").string(), procedural_image<float>(16, 16, 5));
    std::string bad = (dir.path / "bad.ltd").string();
    {
        std::ofstream os(bad, std::ios::binary);
        os << "garbage garbage garbage garbage";
    }
    RunConfig cfg = micro_config();
    fs::path out = dir.path / "outputs";
    REQUIRE_THROWS_AS(
        toolkit::cli_enhance(bad, input.path.string(), out.string(), cfg), std::runtime_error);
    REQUIRE_FALSE(fs::exists(out));
}

TEST_CASE("bench validates the resolution and compares against the baseline") {
    RunConfig cfg = micro_config();
    cfg.bench.warmup = 0;
    cfg.bench.timed = 30;
    try {
        toolkit::cli_bench(cfg, 30, false);
        FAIL("expected divisibility error");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("divisible by 4") != std::string::npos);
    }

    auto result = toolkit::cli_bench(cfg, 8, true);
    REQUIRE(result.light.fps > 0.0);
    REQUIRE(result.vanilla.fps > 0.0);
    REQUIRE(result.compared);
    REQUIRE(result.param_ratio < 0.5);
    REQUIRE(result.light.param_count < result.vanilla.param_count);
}
