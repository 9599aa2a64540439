#ifndef LIGHTDIFF_METRICS_HPP
#define LIGHTDIFF_METRICS_HPP

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/tdiff.hpp"
#include "lightdiff/tensor.hpp"

namespace lightdiff {

/// Peak signal-to-noise ratio in dB over all channels and pixels, for
/// images in [0,1] (dynamic range 1). Identical inputs yield +infinity.
template <typename Real>
double psnr(const TensorT<Real>& reference, const TensorT<Real>& candidate) {
    if (!reference.same_shape(candidate))
        throw std::invalid_argument("psnr: shape mismatch " + shape_string(reference.shape) +
                                    " vs " + shape_string(candidate.shape));
    double mse = 0;
    for (int64_t i = 0; i < reference.size(); ++i) {
        double d = static_cast<double>(reference.data[i]) - static_cast<double>(candidate.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(reference.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size));
    double sum = 0;
    int half = size / 2;
    for (int i = 0; i < size; ++i) {
        double d = i - half;
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// separable Gaussian filter over the valid region (no padding)
inline std::vector<double> gaussian_valid(const std::vector<double>& img, int h, int w,
                                          const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int oh = h - n + 1, ow = w - n + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

/// Structural similarity with the canonical 11-tap Gaussian window
/// (sigma 1.5), stability constants for dynamic range 1, averaged over
/// channels and valid window positions. Result lies in [-1, 1].
template <typename Real>
double ssim(const TensorT<Real>& reference, const TensorT<Real>& candidate) {
    if (!reference.same_shape(candidate))
        throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kWindow = 11;
    constexpr double kC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    const int h = reference.height(), w = reference.width();
    if (h < kWindow || w < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    static const std::vector<double> kernel = detail::gaussian_kernel(kWindow, 1.5);

    const int64_t hw = static_cast<int64_t>(h) * w;
    double total = 0;
    int64_t count = 0;
    std::vector<double> x(static_cast<size_t>(hw)), y(static_cast<size_t>(hw)),
        xx(static_cast<size_t>(hw)), yy(static_cast<size_t>(hw)), xy(static_cast<size_t>(hw));
    for (int c = 0; c < reference.channels(); ++c) {
        for (int64_t p = 0; p < hw; ++p) {
            double a = static_cast<double>(reference.data[c * hw + p]);
            double b = static_cast<double>(candidate.data[c * hw + p]);
            x[static_cast<size_t>(p)] = a;
            y[static_cast<size_t>(p)] = b;
            xx[static_cast<size_t>(p)] = a * a;
            yy[static_cast<size_t>(p)] = b * b;
            xy[static_cast<size_t>(p)] = a * b;
        }
        auto mu_x = detail::gaussian_valid(x, h, w, kernel);
        auto mu_y = detail::gaussian_valid(y, h, w, kernel);
        auto m_xx = detail::gaussian_valid(xx, h, w, kernel);
        auto m_yy = detail::gaussian_valid(yy, h, w, kernel);
        auto m_xy = detail::gaussian_valid(xy, h, w, kernel);
        for (size_t i = 0; i < mu_x.size(); ++i) {
            // numerator and denominator must round identically when the
            // inputs coincide (ssim(a,a) == 1 exactly): volatile pins each
            // product to a rounded double so FMA contraction cannot fold
            // the raw products into the subtractions asymmetrically
            volatile double pxy = mu_x[i] * mu_y[i];
            volatile double pxx = mu_x[i] * mu_x[i];
            volatile double pyy = mu_y[i] * mu_y[i];
            double sx = m_xx[i] - pxx;
            double sy = m_yy[i] - pyy;
            double sxy = m_xy[i] - pxy;
            double num = ((pxy + pxy) + kC1) * ((sxy + sxy) + kC2);
            double den = ((pxx + pyy) + kC1) * ((sx + sy) + kC2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

/// Per-pixel mean absolute error rendered through a fixed-scale blue->red
/// colormap (v=0 pure blue, v=1 pure red). The fixed normalization scale
/// keeps heatmaps comparable across methods.
template <typename Real>
TensorT<Real> error_heatmap(const TensorT<Real>& reference, const TensorT<Real>& candidate,
                            double scale = 0.5) {
    if (!reference.same_shape(candidate))
        throw std::invalid_argument("error_heatmap: shape mismatch");
    if (!(scale > 0)) throw std::invalid_argument("error_heatmap: scale must be > 0");
    const int h = reference.height(), w = reference.width();
    const int64_t hw = static_cast<int64_t>(h) * w;
    TensorT<Real> out({3, h, w});
    for (int64_t p = 0; p < hw; ++p) {
        double mae = 0;
        for (int c = 0; c < reference.channels(); ++c)
            mae += std::abs(static_cast<double>(reference.data[c * hw + p]) -
                            static_cast<double>(candidate.data[c * hw + p]));
        mae /= reference.channels();
        double v = std::min(1.0, std::max(0.0, mae / scale));
        out.data[0 * hw + p] = static_cast<Real>(v);        // red
        out.data[1 * hw + p] = Real(0);                     // green
        out.data[2 * hw + p] = static_cast<Real>(1.0 - v);  // blue
    }
    return out;
}

struct QualityRow {
    std::string name;
    double psnr = 0;
    double ssim = 0;  // raw value in [-1,1]
};

struct QualityReport {
    std::vector<QualityRow> rows;
    double mean_psnr = 0;
    double mean_ssim = 0;  // raw
    int count = 0;

    void finalize() {
        count = static_cast<int>(rows.size());
        double ps = 0, ss = 0;
        for (const auto& r : rows) {
            ps += r.psnr;
            ss += r.ssim;
        }
        mean_psnr = count ? ps / count : 0;
        mean_ssim = count ? ss / count : 0;
    }
};

inline std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

/// One row per image: filename, PSNR in dB, SSIM scaled by 100; aggregate
/// footer holds the arithmetic means.
inline std::string quality_report_text(const QualityReport& report,
                                       const std::string& header = "") {
    std::ostringstream os;
    if (!header.empty()) {
        std::istringstream hs(header);
        for (std::string line; std::getline(hs, line);) os << "# " << line << '\n';
    }
    os << "# filename psnr_db ssim_x100\n";
    char buf[64];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%.4f", r.ssim * 100.0);
        os << r.name << ' ' << format_psnr(r.psnr) << ' ' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.4f", report.mean_ssim * 100.0);
    os << "# aggregate count=" << report.count << " psnr=" << format_psnr(report.mean_psnr)
       << " ssim_x100=" << buf << '\n';
    return os.str();
}

struct BenchReport {
    double fps = 0;
    int warmup = 0;
    int timed = 0;
    int height = 0, width = 0;
    int64_t param_count = 0;
    double seconds = 0;
};

/// Times full sampling passes (one pass = one enhanced frame). Results are
/// hardware-dependent and reported, never compared against fixed numbers.
template <typename Real>
BenchReport fps_bench(DenoiserNetwork<Real>& net, ChromaBalancer<Real>& cb,
                      const NoiseSchedule& ns, const ResolutionSchedule& rs, int warmup,
                      int timed, uint64_t seed = 0, const SampleOptions& opts = {}) {
    if (timed < 30) throw std::invalid_argument("fps_bench: timed count must be >= 30");
    if (warmup < 0) throw std::invalid_argument("fps_bench: warmup count must be >= 0");
    TensorT<Real> condition({net.config().image_channels, rs.base_h, rs.base_w}, Real(0.5));
    NoiseStream stream(seed);
    for (int i = 0; i < warmup; ++i) sample(condition, net, cb, ns, rs, stream, opts);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < timed; ++i) sample(condition, net, cb, ns, rs, stream, opts);
    auto t1 = std::chrono::steady_clock::now();
    BenchReport report;
    report.seconds = std::chrono::duration<double>(t1 - t0).count();
    report.fps = timed / report.seconds;
    report.warmup = warmup;
    report.timed = timed;
    report.height = rs.base_h;
    report.width = rs.base_w;
    report.param_count = count_parameters(net);
    return report;
}

}  // namespace lightdiff

#endif
