#ifndef LIGHTDIFF_DEGRADE_HPP
#define LIGHTDIFF_DEGRADE_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/image_io.hpp"
#include "lightdiff/rng.hpp"
#include "lightdiff/tensor.hpp"

namespace lightdiff {

/// Gamma/illumination ranges for synthetic darkening. gamma >= 1 and
/// illumination <= 1 guarantee every output pixel is darkened.
struct DegradeParams {
    double gamma_min = 1.5;
    double gamma_max = 5.0;
    double illum_min = 0.3;
    double illum_max = 0.8;
    uint64_t seed = 0;

    void validate() const {
        if (!(gamma_min >= 1.0 && gamma_min <= gamma_max))
            throw std::invalid_argument("DegradeParams: need 1 <= gamma_min <= gamma_max");
        if (!(illum_min > 0.0 && illum_min <= illum_max && illum_max <= 1.0))
            throw std::invalid_argument("DegradeParams: need 0 < illum_min <= illum_max <= 1");
    }
};

template <typename Real>
struct ImagePair {
    TensorT<Real> normal;
    TensorT<Real> low;
    double applied_gamma = 1.0;
    double applied_illum = 1.0;
};

/// Darkens one normalized RGB image with one (gamma, illumination) draw:
/// low = clamp(illum * normal^gamma, 0, 1). Deterministic given the
/// stream's (seed, position).
template <typename Real>
ImagePair<Real> degrade_image(const TensorT<Real>& image, const DegradeParams& params,
                              NoiseStream& stream) {
    params.validate();
    if (image.rank() != 3 || image.channels() != 3)
        throw std::invalid_argument("degrade_image: expected a 3-channel image, got " +
                                    shape_string(image.shape));
    for (auto v : image.data)
        if (!(v >= Real(0) && v <= Real(1)))
            throw std::invalid_argument("degrade_image: pixel values must lie in [0,1]");

    ImagePair<Real> pair;
    pair.applied_gamma = params.gamma_min == params.gamma_max
                             ? params.gamma_min
                             : stream.uniform(params.gamma_min, params.gamma_max);
    pair.applied_illum = params.illum_min == params.illum_max
                             ? params.illum_min
                             : stream.uniform(params.illum_min, params.illum_max);
    pair.normal = image;
    pair.low = TensorT<Real>(image.shape);
    for (int64_t i = 0; i < image.size(); ++i) {
        double v = pair.applied_illum *
                   std::pow(static_cast<double>(image.data[i]), pair.applied_gamma);
        pair.low.data[i] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
    }
    return pair;
}

struct ManifestEntry {
    std::string filename;
    double gamma = 1.0;
    double illum = 1.0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> errors;  // filenames that failed to decode
    std::string path;
};

inline void write_manifest(const Manifest& manifest, const DegradeParams& params) {
    std::ofstream os(manifest.path, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot write " + manifest.path);
    os << "# seed " << params.seed << '\n';
    char buf[160];
    std::snprintf(buf, sizeof(buf), "# gamma_range %.6f %.6f illum_range %.6f %.6f",
                  params.gamma_min, params.gamma_max, params.illum_min, params.illum_max);
    os << buf << '\n';
    os << "# filename gamma illum\n";
    for (const auto& e : manifest.entries) {
        std::snprintf(buf, sizeof(buf), "%s %.6f %.6f", e.filename.c_str(), e.gamma, e.illum);
        os << buf << '\n';
    }
    if (!manifest.errors.empty()) {
        os << "# errors\n";
        for (const auto& f : manifest.errors) os << "# error: " << f << '\n';
    }
    if (!os) throw std::runtime_error("manifest: write failed for " + manifest.path);
}

/// Builds a paired dataset under dst_dir/{low,normal}/ plus a manifest.
/// Each image gets an independent substream derived from (seed, index in
/// sorted filename order), so reruns are byte-identical and unreadable
/// inputs do not shift later draws.
template <typename Real = float>
Manifest build_pair_dataset(const std::string& src_dir, const std::string& dst_dir,
                            const DegradeParams& params) {
    namespace fs = std::filesystem;
    params.validate();
    if (!fs::is_directory(src_dir))
        throw std::runtime_error("build_pair_dataset: source directory not found: " + src_dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(src_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("build_pair_dataset: no files in " + src_dir);

    fs::create_directories(fs::path(dst_dir) / "low");
    fs::create_directories(fs::path(dst_dir) / "normal");

    Manifest manifest;
    manifest.path = (fs::path(dst_dir) / "manifest.txt").string();
    NoiseStream root(params.seed);
    for (size_t i = 0; i < files.size(); ++i) {
        TensorT<Real> image;
        try {
            image = load_image<Real>(files[i].string());
        } catch (const std::exception&) {
            manifest.errors.push_back(files[i].filename().string());
            continue;
        }
        NoiseStream sub = root.substream(i);
        ImagePair<Real> pair = degrade_image(image, params, sub);
        std::string name = files[i].stem().string() + ".png";
        save_image((fs::path(dst_dir) / "low" / name).string(), pair.low);
        save_image((fs::path(dst_dir) / "normal" / name).string(), pair.normal);
        manifest.entries.push_back({name, pair.applied_gamma, pair.applied_illum});
    }
    write_manifest(manifest, params);
    return manifest;
}

}  // namespace lightdiff

#endif
