#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "lightdiff/degrade.hpp"
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

DegradeParams identity_params() {
    DegradeParams p;
    p.gamma_min = p.gamma_max = 1.0;
    p.illum_min = p.illum_max = 1.0;
    return p;
}

}  // namespace

TEST_CASE("identity parameters leave the image untouched") {
    NoiseStream stream(1);
    TensorT<double> img = procedural_image<double>(12, 12, 7);
    ImagePair<double> pair = degrade_image(img, identity_params(), stream);
    REQUIRE(pair.applied_gamma == 1.0);
    REQUIRE(pair.applied_illum == 1.0);
    REQUIRE(bitwise_equal(pair.low, pair.normal));
    REQUIRE(bitwise_equal(pair.low, img));
}

TEST_CASE("gamma and illumination act as expected on known pixels") {
    NoiseStream stream(2);
    DegradeParams square;
    square.gamma_min = square.gamma_max = 2.0;
    square.illum_min = square.illum_max = 1.0;
    TensorT<double> quarter({3, 2, 2}, 0.25);
    ImagePair<double> pair = degrade_image(quarter, square, stream);
    for (auto v : pair.low.data) REQUIRE(v == Catch::Approx(0.0625).epsilon(1e-15));

    DegradeParams half;
    half.gamma_min = half.gamma_max = 3.0;
    half.illum_min = half.illum_max = 0.5;
    TensorT<double> ones({3, 2, 2}, 1.0);
    pair = degrade_image(ones, half, stream);
    for (auto v : pair.low.data) REQUIRE(v == Catch::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("degrade_image rejects malformed input") {
    NoiseStream stream(3);
    DegradeParams params;
    TensorT<double> over({3, 2, 2}, 1.5);
    REQUIRE_THROWS_AS(degrade_image(over, params, stream), std::invalid_argument);
    TensorT<double> negative({3, 2, 2}, -0.1);
    REQUIRE_THROWS_AS(degrade_image(negative, params, stream), std::invalid_argument);
    TensorT<double> gray({1, 2, 2}, 0.5);
    REQUIRE_THROWS_AS(degrade_image(gray, params, stream), std::invalid_argument);

    DegradeParams brightening;
    brightening.gamma_min = 0.5;
    REQUIRE_THROWS_AS(degrade_image(over, brightening, stream), std::invalid_argument);
    DegradeParams bad_illum;
    bad_illum.illum_min = 0.0;
    REQUIRE_THROWS_AS(degrade_image(over, bad_illum, stream), std::invalid_argument);
}

TEST_CASE("degradation only darkens and is deterministic per stream state") {
    DegradeParams params;
    params.seed = 9;
    for (int trial = 0; trial < 20; ++trial) {
        TensorT<double> img = procedural_image<double>(10, 14, 100 + static_cast<uint64_t>(trial));
        NoiseStream a(params.seed, static_cast<uint64_t>(trial) * 10);
        ImagePair<double> pair = degrade_image(img, params, a);
        REQUIRE(pair.applied_gamma >= params.gamma_min);
        REQUIRE(pair.applied_gamma <= params.gamma_max);
        REQUIRE(pair.applied_illum >= params.illum_min);
        REQUIRE(pair.applied_illum <= params.illum_max);
        for (int64_t i = 0; i < img.size(); ++i) {
            REQUIRE(pair.low.data[i] <= pair.normal.data[i]);
            REQUIRE(pair.low.data[i] >= 0.0);
        }
        REQUIRE(pair.low.mean() <= pair.normal.mean());

        NoiseStream b(params.seed, static_cast<uint64_t>(trial) * 10);
        ImagePair<double> again = degrade_image(img, params, b);
        REQUIRE(again.applied_gamma == pair.applied_gamma);
        REQUIRE(again.applied_illum == pair.applied_illum);
        REQUIRE(bitwise_equal(again.low, pair.low));
    }
}

TEST_CASE("pair dataset build is reproducible and isolates bad files") {
    TempDir src("lightdiff_degrade_src"), dst1("lightdiff_degrade_dst1"),
        dst2("lightdiff_degrade_dst2");
    for (int i = 0; i < 4; ++i)
        save_image((src.path / ("img" + std::to_string(i) + ".png")).string(),
                   procedural_image<float>(16, 16, 200 + static_cast<uint64_t>(i)));

    DegradeParams params;
    params.seed = 7;
    Manifest m1 = build_pair_dataset<float>(src.path.string(), dst1.path.string(), params);
    REQUIRE(m1.entries.size() == 4);
    REQUIRE(m1.errors.empty());
    REQUIRE(fs::exists(m1.path));
    for (const auto& e : m1.entries) {
        REQUIRE(fs::exists(dst1.path / "low" / e.filename));
        REQUIRE(fs::exists(dst1.path / "normal" / e.filename));
        REQUIRE(e.gamma >= params.gamma_min);
        REQUIRE(e.illum <= params.illum_max);
    }

    // same seed: byte-identical outputs
    Manifest m2 = build_pair_dataset<float>(src.path.string(), dst2.path.string(), params);
    for (const auto& e : m2.entries)
        REQUIRE(read_bytes(dst1.path / "low" / e.filename) ==
                read_bytes(dst2.path / "low" / e.filename));
    REQUIRE(read_bytes(dst1.path / "manifest.txt") == read_bytes(dst2.path / "manifest.txt"));

    // a corrupt file lands in the error list without disturbing the rest
    {
        std::ofstream os(src.path / "broken.png");
        os << "not image data";
    }
    TempDir dst3("lightdiff_degrade_dst3");
    Manifest m3 = build_pair_dataset<float>(src.path.string(), dst3.path.string(), params);
    REQUIRE(m3.entries.size() == 4);
    REQUIRE(m3.errors.size() == 1);
    REQUIRE(m3.errors[0] == "broken.png");
    std::ifstream manifest(m3.path);
    std::string text((std::istreambuf_iterator<char>(manifest)), {});
    REQUIRE(text.find("# error: broken.png") != std::string::npos);
}

TEST_CASE("identity parameters give byte-identical low and normal files") {
    TempDir src("lightdiff_degrade_id_src"), dst("lightdiff_degrade_id_dst");
    for (int i = 0; i < 2; ++i)
        save_image((src.path / ("img" + std::to_string(i) + ".png")).string(),
                   procedural_image<float>(12, 12, 300 + static_cast<uint64_t>(i)));
    Manifest m = build_pair_dataset<float>(src.path.string(), dst.path.string(), identity_params());
    for (const auto& e : m.entries)
        REQUIRE(read_bytes(dst.path / "low" / e.filename) ==
                read_bytes(dst.path / "normal" / e.filename));
}

TEST_CASE("dataset build rejects missing or empty sources") {
    TempDir empty("lightdiff_degrade_empty");
    DegradeParams params;
    REQUIRE_THROWS_AS(build_pair_dataset<float>("/nonexistent/dir", "/tmp/out_never", params),
                      std::runtime_error);
    REQUIRE_THROWS_AS(build_pair_dataset<float>(empty.path.string(), "/tmp/out_never", params),
                      std::runtime_error);
}

TEST_CASE("png round trip preserves 8-bit data") {
    TempDir dir("lightdiff_io_roundtrip");
    TensorT<float> img = procedural_image<float>(9, 13, 42);
    // quantize to the 8-bit grid first so the round trip is exact
    for (auto& v : img.data) v = std::round(v * 255.0f) / 255.0f;
    std::string path = (dir.path / "img.png").string();
    save_image(path, img);
    TensorT<float> back = load_image<float>(path);
    REQUIRE(back.shape == img.shape);
    REQUIRE(max_abs_diff(back, img) < 1e-6);
}
