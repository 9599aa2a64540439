#ifndef LIGHTDIFF_RESIZE_HPP
#define LIGHTDIFF_RESIZE_HPP

#include <algorithm>
#include <stdexcept>

#include "lightdiff/tensor.hpp"

namespace lightdiff {

/// Stride-k nearest subsampling, keeping pixels at (k*i, k*j). This is the
/// only downsampler allowed inside the noise algebra: it keeps i.i.d.
/// Gaussian noise i.i.d. with unchanged per-pixel variance, so the
/// closed-form marginal stays exactly consistent with the stepwise chain.
template <typename Real>
TensorT<Real> subsample(const TensorT<Real>& x, int factor) {
    if (factor < 1) throw std::invalid_argument("subsample: factor must be >= 1");
    if (factor == 1) return x;
    if (x.height() % factor != 0 || x.width() % factor != 0)
        throw std::invalid_argument("subsample: dims not divisible by factor");
    TensorT<Real> out({x.channels(), x.height() / factor, x.width() / factor});
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int xx = 0; xx < out.width(); ++xx)
                out.at(c, y, xx) = x.at(c, y * factor, xx * factor);
    return out;
}

/// Box-average downsampling by an integer factor. Used for the condition
/// image only, never inside the noise algebra.
template <typename Real>
TensorT<Real> area_downsample(const TensorT<Real>& x, int factor) {
    if (factor < 1) throw std::invalid_argument("area_downsample: factor must be >= 1");
    if (factor == 1) return x;
    if (x.height() % factor != 0 || x.width() % factor != 0)
        throw std::invalid_argument("area_downsample: dims not divisible by factor");
    TensorT<Real> out({x.channels(), x.height() / factor, x.width() / factor});
    Real inv = Real(1) / static_cast<Real>(factor * factor);
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int xx = 0; xx < out.width(); ++xx) {
                Real s = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += x.at(c, y * factor + dy, xx * factor + dx);
                out.at(c, y, xx) = s * inv;
            }
    return out;
}

/// Bilinear resize with half-pixel centers.
template <typename Real>
TensorT<Real> bilinear_resize(const TensorT<Real>& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: bad target size");
    if (out_h == x.height() && out_w == x.width()) return x;
    TensorT<Real> out({x.channels(), out_h, out_w});
    double sy = static_cast<double>(x.height()) / out_h;
    double sx = static_cast<double>(x.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, x.height() - 1);
        int y1c = std::clamp(y0 + 1, 0, x.height() - 1);
        for (int xx = 0; xx < out_w; ++xx) {
            double fx = (xx + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, x.width() - 1);
            int x1c = std::clamp(x0 + 1, 0, x.width() - 1);
            for (int c = 0; c < x.channels(); ++c) {
                double v = (1 - wy) * ((1 - wx) * x.at(c, y0c, x0c) + wx * x.at(c, y0c, x1c)) +
                           wy * ((1 - wx) * x.at(c, y1c, x0c) + wx * x.at(c, y1c, x1c));
                out.at(c, y, xx) = static_cast<Real>(v);
            }
        }
    }
    return out;
}

/// Nearest-neighbor upsampling by an integer factor.
template <typename Real>
TensorT<Real> nearest_upsample(const TensorT<Real>& x, int factor) {
    if (factor < 1) throw std::invalid_argument("nearest_upsample: factor must be >= 1");
    if (factor == 1) return x;
    TensorT<Real> out({x.channels(), x.height() * factor, x.width() * factor});
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int xx = 0; xx < out.width(); ++xx)
                out.at(c, y, xx) = x.at(c, y / factor, xx / factor);
    return out;
}

/// Resize to an arbitrary target: box average for integer shrink factors,
/// bilinear otherwise.
template <typename Real>
TensorT<Real> smooth_resize(const TensorT<Real>& x, int out_h, int out_w) {
    if (out_h == x.height() && out_w == x.width()) return x;
    if (out_h < x.height() && x.height() % out_h == 0 && out_w < x.width() &&
        x.width() % out_w == 0 && x.height() / out_h == x.width() / out_w)
        return area_downsample(x, x.height() / out_h);
    return bilinear_resize(x, out_h, out_w);
}

}  // namespace lightdiff

#endif
