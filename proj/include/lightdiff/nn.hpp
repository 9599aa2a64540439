#ifndef LIGHTDIFF_NN_HPP
#define LIGHTDIFF_NN_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/tensor.hpp"

namespace lightdiff::nn {

template <typename Real>
using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapRM = Eigen::Map<MatRM<Real>>;
template <typename Real>
using CMapRM = Eigen::Map<const MatRM<Real>>;

template <typename Real>
struct Param {
    TensorT<Real> value;
    TensorT<Real> grad;  // lazily allocated by zero_grad; inference never pays for it

    void init(std::vector<int> shape) { value = TensorT<Real>(std::move(shape)); }
    void zero_grad() {
        if (grad.shape != value.shape)
            grad = TensorT<Real>(value.shape);
        else
            grad.zero();
    }
    /// Gradient buffer, allocated (zeroed) on first use.
    TensorT<Real>& g() {
        if (grad.shape != value.shape) grad = TensorT<Real>(value.shape);
        return grad;
    }
    int64_t size() const { return value.size(); }
};

template <typename Real>
struct NamedParam {
    std::string name;
    Param<Real>* param;
};

template <typename Real>
void uniform_init(TensorT<Real>& t, double bound, NoiseStream& stream) {
    stream.fill_uniform(t.data, -bound, bound);
}

inline Eigen::Index idx(int64_t v) { return static_cast<Eigen::Index>(v); }

// ---------------------------------------------------------------------------
// Conv2d: stride 1, odd kernel, zero padding keeping spatial size.
// Weight layout (out_ch, in_ch*k*k) so forward is one GEMM over im2col.
// ---------------------------------------------------------------------------
template <typename Real>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int ksize, NoiseStream& stream)
        : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), pad_(ksize / 2) {
        if (ksize % 2 != 1) throw std::invalid_argument("Conv2d: kernel size must be odd");
        weight.init({out_ch, in_ch * ksize * ksize});
        bias.init({out_ch});
        double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * ksize * ksize);
        uniform_init(weight.value, bound, stream);
        uniform_init(bias.value, bound, stream);
    }

    void zero_init() {
        weight.value.zero();
        bias.value.zero();
    }

    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        if (x.channels() != in_ch_)
            throw std::invalid_argument("Conv2d: expected " + std::to_string(in_ch_) +
                                        " channels, got " + std::to_string(x.channels()));
        const int h = x.height(), w = x.width();
        const int64_t hw = static_cast<int64_t>(h) * w;
        TensorT<Real> out({out_ch_, h, w});
        MapRM<Real> y(out.data.data(), out_ch_, idx(hw));
        CMapRM<Real> wm(weight.value.data.data(), out_ch_, in_ch_ * ksize_ * ksize_);
        if (ksize_ == 1) {
            CMapRM<Real> xm(x.data.data(), in_ch_, idx(hw));
            y.noalias() = wm * xm;
        } else {
            TensorT<Real> col = im2col(x);
            CMapRM<Real> cm(col.data.data(), in_ch_ * ksize_ * ksize_, idx(hw));
            y.noalias() = wm * cm;
            if (keep) col_ = std::move(col);
        }
        for (int c = 0; c < out_ch_; ++c)
            y.row(c).array() += bias.value[c];
        if (keep) {
            h_ = h;
            w_ = w;
            if (ksize_ == 1) x_ = x;
        }
        return out;
    }

    TensorT<Real> backward(const TensorT<Real>& gout) {
        const int h = h_, w = w_;
        const int64_t hw = static_cast<int64_t>(h) * w;
        CMapRM<Real> g(gout.data.data(), out_ch_, idx(hw));
        MapRM<Real> dw(weight.g().data.data(), out_ch_, in_ch_ * ksize_ * ksize_);
        for (int c = 0; c < out_ch_; ++c)
            bias.g()[c] += g.row(c).sum();
        CMapRM<Real> wm(weight.value.data.data(), out_ch_, in_ch_ * ksize_ * ksize_);
        TensorT<Real> dx({in_ch_, h, w});
        if (ksize_ == 1) {
            CMapRM<Real> xm(x_.data.data(), in_ch_, idx(hw));
            dw.noalias() += g * xm.transpose();
            MapRM<Real> dxm(dx.data.data(), in_ch_, idx(hw));
            dxm.noalias() = wm.transpose() * g;
        } else {
            CMapRM<Real> cm(col_.data.data(), in_ch_ * ksize_ * ksize_, idx(hw));
            dw.noalias() += g * cm.transpose();
            TensorT<Real> dcol({in_ch_ * ksize_ * ksize_, static_cast<int>(hw)});
            MapRM<Real> dcm(dcol.data.data(), in_ch_ * ksize_ * ksize_, idx(hw));
            dcm.noalias() = wm.transpose() * g;
            col2im(dcol, dx);
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<Real>>& out) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }

    void release_cache() {
        col_ = TensorT<Real>();
        x_ = TensorT<Real>();
    }

    Param<Real> weight;
    Param<Real> bias;

private:
    TensorT<Real> im2col(const TensorT<Real>& x) const {
        const int h = x.height(), w = x.width();
        TensorT<Real> col({in_ch_ * ksize_ * ksize_, h * w});
        int64_t row = 0;
        for (int c = 0; c < in_ch_; ++c)
            for (int ky = 0; ky < ksize_; ++ky)
                for (int kx = 0; kx < ksize_; ++kx, ++row) {
                    Real* dst = col.data.data() + row * h * w;
                    int oy = ky - pad_, ox = kx - pad_;
                    for (int y = 0; y < h; ++y) {
                        int sy = y + oy;
                        if (sy < 0 || sy >= h) {
                            std::fill(dst + static_cast<int64_t>(y) * w,
                                      dst + static_cast<int64_t>(y + 1) * w, Real(0));
                            continue;
                        }
                        const Real* src = x.data.data() + (static_cast<int64_t>(c) * h + sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            int sx = xx + ox;
                            dst[static_cast<int64_t>(y) * w + xx] =
                                (sx < 0 || sx >= w) ? Real(0) : src[sx];
                        }
                    }
                }
        return col;
    }

    void col2im(const TensorT<Real>& dcol, TensorT<Real>& dx) const {
        const int h = dx.height(), w = dx.width();
        dx.zero();
        int64_t row = 0;
        for (int c = 0; c < in_ch_; ++c)
            for (int ky = 0; ky < ksize_; ++ky)
                for (int kx = 0; kx < ksize_; ++kx, ++row) {
                    const Real* src = dcol.data.data() + row * h * w;
                    int oy = ky - pad_, ox = kx - pad_;
                    for (int y = 0; y < h; ++y) {
                        int sy = y + oy;
                        if (sy < 0 || sy >= h) continue;
                        Real* dst = dx.data.data() + (static_cast<int64_t>(c) * h + sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            int sx = xx + ox;
                            if (sx >= 0 && sx < w)
                                dst[sx] += src[static_cast<int64_t>(y) * w + xx];
                        }
                    }
                }
    }

    int in_ch_ = 0, out_ch_ = 0, ksize_ = 0, pad_ = 0;
    TensorT<Real> col_;  // cached im2col for backward
    TensorT<Real> x_;    // cached input (1x1 path)
    int h_ = 0, w_ = 0;
};

// ---------------------------------------------------------------------------
// Linear on rank-1 tensors.
// ---------------------------------------------------------------------------
template <typename Real>
class Linear {
public:
    Linear() = default;
    Linear(int in_dim, int out_dim, NoiseStream& stream) : in_(in_dim), out_(out_dim) {
        weight.init({out_dim, in_dim});
        bias.init({out_dim});
        double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        uniform_init(weight.value, bound, stream);
        uniform_init(bias.value, bound, stream);
    }

    void zero_init() {
        weight.value.zero();
        bias.value.zero();
    }

    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        if (x.size() != in_) throw std::invalid_argument("Linear: input size mismatch");
        TensorT<Real> y({out_});
        CMapRM<Real> wm(weight.value.data.data(), out_, in_);
        Eigen::Map<const Eigen::Vector<Real, Eigen::Dynamic>> xv(x.data.data(), in_);
        Eigen::Map<Eigen::Vector<Real, Eigen::Dynamic>> yv(y.data.data(), out_);
        yv.noalias() = wm * xv;
        for (int i = 0; i < out_; ++i) y[i] += bias.value[i];
        if (keep) x_ = x;
        return y;
    }

    TensorT<Real> backward(const TensorT<Real>& gout) {
        MapRM<Real> dw(weight.g().data.data(), out_, in_);
        Eigen::Map<const Eigen::Vector<Real, Eigen::Dynamic>> gv(gout.data.data(), out_);
        Eigen::Map<const Eigen::Vector<Real, Eigen::Dynamic>> xv(x_.data.data(), in_);
        dw.noalias() += gv * xv.transpose();
        for (int i = 0; i < out_; ++i) bias.g()[i] += gout[i];
        TensorT<Real> dx({in_});
        Eigen::Map<Eigen::Vector<Real, Eigen::Dynamic>> dxv(dx.data.data(), in_);
        CMapRM<Real> wm(weight.value.data.data(), out_, in_);
        dxv.noalias() = wm.transpose() * gv;
        return dx;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<Real>>& out) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }

    Param<Real> weight;
    Param<Real> bias;

private:
    int in_ = 0, out_ = 0;
    TensorT<Real> x_;
};

// ---------------------------------------------------------------------------
// Layer normalization across the channel axis at each spatial position,
// with per-channel affine.
// ---------------------------------------------------------------------------
template <typename Real>
class ChannelLayerNorm {
public:
    ChannelLayerNorm() = default;
    explicit ChannelLayerNorm(int channels) : ch_(channels) {
        gamma.init({channels});
        beta.init({channels});
        gamma.value.fill(Real(1));
    }

    // loops run channel-major so every scan is contiguous in memory
    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        if (x.channels() != ch_) throw std::invalid_argument("ChannelLayerNorm: channel mismatch");
        const int64_t hw = static_cast<int64_t>(x.height()) * x.width();
        TensorT<Real> out(x.shape);
        TensorT<Real> xhat(x.shape);
        TensorT<Real> istd({x.height(), x.width()});
        const Real inv_c = Real(1) / static_cast<Real>(ch_);
        std::vector<Real> mean(static_cast<size_t>(hw), Real(0));
        std::vector<Real> var(static_cast<size_t>(hw), Real(0));
        for (int c = 0; c < ch_; ++c) {
            const Real* row = x.data.data() + c * hw;
            for (int64_t p = 0; p < hw; ++p) mean[static_cast<size_t>(p)] += row[p];
        }
        for (int64_t p = 0; p < hw; ++p) mean[static_cast<size_t>(p)] *= inv_c;
        for (int c = 0; c < ch_; ++c) {
            const Real* row = x.data.data() + c * hw;
            for (int64_t p = 0; p < hw; ++p) {
                Real d = row[p] - mean[static_cast<size_t>(p)];
                var[static_cast<size_t>(p)] += d * d;
            }
        }
        for (int64_t p = 0; p < hw; ++p)
            istd.data[p] = Real(1) / std::sqrt(var[static_cast<size_t>(p)] * inv_c + eps_);
        for (int c = 0; c < ch_; ++c) {
            const Real* row = x.data.data() + c * hw;
            Real* xh = xhat.data.data() + c * hw;
            Real* o = out.data.data() + c * hw;
            const Real g = gamma.value[c], b = beta.value[c];
            for (int64_t p = 0; p < hw; ++p) {
                xh[p] = (row[p] - mean[static_cast<size_t>(p)]) * istd.data[p];
                o[p] = g * xh[p] + b;
            }
        }
        if (keep) {
            xhat_ = std::move(xhat);
            istd_ = std::move(istd);
        }
        return out;
    }

    TensorT<Real> backward(const TensorT<Real>& gout) {
        const int64_t hw = istd_.size();
        TensorT<Real> dx(gout.shape);
        const Real inv_c = Real(1) / static_cast<Real>(ch_);
        std::vector<Real> sum_g(static_cast<size_t>(hw), Real(0));
        std::vector<Real> sum_gx(static_cast<size_t>(hw), Real(0));
        for (int c = 0; c < ch_; ++c) {
            const Real* go = gout.data.data() + c * hw;
            const Real* xh = xhat_.data.data() + c * hw;
            const Real g = gamma.value[c];
            Real dg = 0, db = 0;
            for (int64_t p = 0; p < hw; ++p) {
                Real gh = go[p] * g;
                sum_g[static_cast<size_t>(p)] += gh;
                sum_gx[static_cast<size_t>(p)] += gh * xh[p];
                dg += go[p] * xh[p];
                db += go[p];
            }
            gamma.g()[c] += dg;
            beta.g()[c] += db;
        }
        for (int64_t p = 0; p < hw; ++p) {
            sum_g[static_cast<size_t>(p)] *= inv_c;
            sum_gx[static_cast<size_t>(p)] *= inv_c;
        }
        for (int c = 0; c < ch_; ++c) {
            const Real* go = gout.data.data() + c * hw;
            const Real* xh = xhat_.data.data() + c * hw;
            Real* d = dx.data.data() + c * hw;
            const Real g = gamma.value[c];
            for (int64_t p = 0; p < hw; ++p)
                d[p] = istd_.data[p] *
                       (go[p] * g - sum_g[static_cast<size_t>(p)] - xh[p] * sum_gx[static_cast<size_t>(p)]);
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<Real>>& out) {
        out.push_back({prefix + ".gamma", &gamma});
        out.push_back({prefix + ".beta", &beta});
    }

    Param<Real> gamma;
    Param<Real> beta;

private:
    int ch_ = 0;
    Real eps_ = Real(1e-5);
    TensorT<Real> xhat_;
    TensorT<Real> istd_;
};

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------
template <typename Real>
Real sigmoid_scalar(Real x) {
    return x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                  : std::exp(x) / (Real(1) + std::exp(x));
}

template <typename Real>
class SiLU {
public:
    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        TensorT<Real> out(x.shape);
        TensorT<Real> sig(x.shape);
        const Eigen::Index n = idx(x.size());
        Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>> xa(x.data.data(), n);
        Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>> sa(sig.data.data(), n);
        Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>> oa(out.data.data(), n);
        sa = (-xa.abs()).exp();  // stable for both signs
        sa = (xa >= Real(0)).select(Real(1), sa) / (Real(1) + sa);
        oa = xa * sa;
        if (keep) {
            x_ = x;
            sig_ = std::move(sig);
        }
        return out;
    }
    TensorT<Real> backward(const TensorT<Real>& gout) {
        TensorT<Real> dx(gout.shape);
        for (int64_t i = 0; i < gout.size(); ++i) {
            Real s = sig_.data[i];
            dx.data[i] = gout.data[i] * (s * (Real(1) + x_.data[i] * (Real(1) - s)));
        }
        return dx;
    }

private:
    TensorT<Real> x_;
    TensorT<Real> sig_;
};

template <typename Real>
class Sigmoid {
public:
    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        TensorT<Real> out(x.shape);
        for (int64_t i = 0; i < x.size(); ++i) out.data[i] = sigmoid_scalar(x.data[i]);
        if (keep) y_ = out;
        return out;
    }
    TensorT<Real> backward(const TensorT<Real>& gout) {
        TensorT<Real> dx(gout.shape);
        for (int64_t i = 0; i < gout.size(); ++i)
            dx.data[i] = gout.data[i] * y_.data[i] * (Real(1) - y_.data[i]);
        return dx;
    }

private:
    TensorT<Real> y_;
};

// ---------------------------------------------------------------------------
// Fixed resampling ops (no parameters).
// ---------------------------------------------------------------------------
template <typename Real>
TensorT<Real> avg_pool2(const TensorT<Real>& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0)
        throw std::invalid_argument("avg_pool2: odd spatial dims");
    TensorT<Real> out({x.channels(), x.height() / 2, x.width() / 2});
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int xx = 0; xx < out.width(); ++xx)
                out.at(c, y, xx) = (x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1) +
                                    x.at(c, 2 * y + 1, 2 * xx) + x.at(c, 2 * y + 1, 2 * xx + 1)) *
                                   Real(0.25);
    return out;
}

template <typename Real>
TensorT<Real> avg_pool2_backward(const TensorT<Real>& gout) {
    TensorT<Real> dx({gout.channels(), gout.height() * 2, gout.width() * 2});
    for (int c = 0; c < gout.channels(); ++c)
        for (int y = 0; y < gout.height(); ++y)
            for (int xx = 0; xx < gout.width(); ++xx) {
                Real g = gout.at(c, y, xx) * Real(0.25);
                dx.at(c, 2 * y, 2 * xx) = g;
                dx.at(c, 2 * y, 2 * xx + 1) = g;
                dx.at(c, 2 * y + 1, 2 * xx) = g;
                dx.at(c, 2 * y + 1, 2 * xx + 1) = g;
            }
    return dx;
}

template <typename Real>
TensorT<Real> nearest_up2(const TensorT<Real>& x) {
    TensorT<Real> out({x.channels(), x.height() * 2, x.width() * 2});
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int xx = 0; xx < out.width(); ++xx)
                out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
    return out;
}

template <typename Real>
TensorT<Real> nearest_up2_backward(const TensorT<Real>& gout) {
    TensorT<Real> dx({gout.channels(), gout.height() / 2, gout.width() / 2});
    for (int c = 0; c < dx.channels(); ++c)
        for (int y = 0; y < dx.height(); ++y)
            for (int xx = 0; xx < dx.width(); ++xx)
                dx.at(c, y, xx) = gout.at(c, 2 * y, 2 * xx) + gout.at(c, 2 * y, 2 * xx + 1) +
                                  gout.at(c, 2 * y + 1, 2 * xx) + gout.at(c, 2 * y + 1, 2 * xx + 1);
    return dx;
}

template <typename Real>
TensorT<Real> global_avg_pool(const TensorT<Real>& x) {
    TensorT<Real> out({x.channels()});
    const int64_t hw = static_cast<int64_t>(x.height()) * x.width();
    for (int c = 0; c < x.channels(); ++c) {
        Real s = 0;
        for (int64_t p = 0; p < hw; ++p) s += x.data[c * hw + p];
        out[c] = s / static_cast<Real>(hw);
    }
    return out;
}

template <typename Real>
TensorT<Real> global_avg_pool_backward(const TensorT<Real>& gout, int h, int w) {
    TensorT<Real> dx({static_cast<int>(gout.size()), h, w});
    const Real inv = Real(1) / static_cast<Real>(static_cast<int64_t>(h) * w);
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < dx.channels(); ++c)
        for (int64_t p = 0; p < hw; ++p) dx.data[c * hw + p] = gout[c] * inv;
    return dx;
}

/// Adds a per-channel bias vector to every spatial position.
template <typename Real>
void add_channel_bias(TensorT<Real>& x, const TensorT<Real>& bias) {
    if (bias.size() != x.channels())
        throw std::invalid_argument("add_channel_bias: channel mismatch, feature has " +
                                    std::to_string(x.channels()) + " channels, bias has " +
                                    std::to_string(bias.size()));
    const int64_t hw = static_cast<int64_t>(x.height()) * x.width();
    for (int c = 0; c < x.channels(); ++c)
        for (int64_t p = 0; p < hw; ++p) x.data[c * hw + p] += bias[c];
}

/// Gradient of add_channel_bias with respect to the bias vector.
template <typename Real>
TensorT<Real> channel_bias_grad(const TensorT<Real>& gout) {
    TensorT<Real> g({gout.channels()});
    const int64_t hw = static_cast<int64_t>(gout.height()) * gout.width();
    for (int c = 0; c < gout.channels(); ++c) {
        Real s = 0;
        for (int64_t p = 0; p < hw; ++p) s += gout.data[c * hw + p];
        g[c] = s;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Spatial self-attention (baseline building block). Single head over all
// positions; O((H*W)^2) — intended for coarse feature maps.
// ---------------------------------------------------------------------------
template <typename Real>
class SelfAttention2d {
public:
    SelfAttention2d() = default;
    SelfAttention2d(int channels, NoiseStream& stream)
        : ch_(channels),
          norm_(channels),
          q_(channels, channels, 1, stream),
          k_(channels, channels, 1, stream),
          v_(channels, channels, 1, stream),
          proj_(channels, channels, 1, stream) {
        proj_.zero_init();
    }

    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        const int h = x.height(), w = x.width();
        const int64_t p = static_cast<int64_t>(h) * w;
        TensorT<Real> n = norm_.forward(x, keep);
        TensorT<Real> q = q_.forward(n, keep);
        TensorT<Real> k = k_.forward(n, keep);
        TensorT<Real> v = v_.forward(n, keep);
        const Real scale = Real(1) / std::sqrt(static_cast<Real>(ch_));
        CMapRM<Real> qm(q.data.data(), ch_, idx(p)), km(k.data.data(), ch_, idx(p)),
            vm(v.data.data(), ch_, idx(p));
        TensorT<Real> attn({static_cast<int>(p), static_cast<int>(p)});
        MapRM<Real> am(attn.data.data(), idx(p), idx(p));
        am.noalias() = qm.transpose() * km;
        am *= scale;
        for (int64_t i = 0; i < p; ++i) {  // row-wise softmax
            auto row = am.row(idx(i));
            Real mx = row.maxCoeff();
            row = (row.array() - mx).exp();
            row /= row.sum();
        }
        TensorT<Real> o({ch_, h, w});
        MapRM<Real> om(o.data.data(), ch_, idx(p));
        om.noalias() = vm * am.transpose();
        TensorT<Real> out = proj_.forward(o, keep);
        out += x;
        if (keep) {
            attn_ = std::move(attn);
            q_cache_ = std::move(q);
            k_cache_ = std::move(k);
            v_cache_ = std::move(v);
        }
        return out;
    }

    TensorT<Real> backward(const TensorT<Real>& gout) {
        const int64_t p = static_cast<int64_t>(attn_.dim(0));
        const Real scale = Real(1) / std::sqrt(static_cast<Real>(ch_));
        TensorT<Real> go = proj_.backward(gout);
        CMapRM<Real> gom(go.data.data(), ch_, idx(p));
        CMapRM<Real> am(attn_.data.data(), idx(p), idx(p));
        CMapRM<Real> qm(q_cache_.data.data(), ch_, idx(p)), km(k_cache_.data.data(), ch_, idx(p)),
            vm(v_cache_.data.data(), ch_, idx(p));
        // o = v * a^T  =>  dv = go * a, da = v^T * go (transposed into row space)
        TensorT<Real> dv({ch_, q_cache_.height(), q_cache_.width()});
        MapRM<Real> dvm(dv.data.data(), ch_, idx(p));
        dvm.noalias() = gom * am;
        MatRM<Real> da = (vm.transpose() * gom).transpose();  // (p_q, p_k)
        // softmax backward per row
        for (int64_t i = 0; i < p; ++i) {
            auto arow = am.row(idx(i));
            auto drow = da.row(idx(i));
            Real dot = (drow.array() * arow.array()).sum();
            da.row(idx(i)) = (drow.array() - dot) * arow.array();
        }
        TensorT<Real> dq({ch_, q_cache_.height(), q_cache_.width()});
        TensorT<Real> dk({ch_, q_cache_.height(), q_cache_.width()});
        MapRM<Real> dqm(dq.data.data(), ch_, idx(p)), dkm(dk.data.data(), ch_, idx(p));
        dqm.noalias() = km * da.transpose() * scale;
        dkm.noalias() = qm * da * scale;
        TensorT<Real> dn = q_.backward(dq);
        dn += k_.backward(dk);
        dn += v_.backward(dv);
        TensorT<Real> dx = norm_.backward(dn);
        dx += gout;  // residual
        return dx;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<Real>>& out) {
        norm_.collect(prefix + ".norm", out);
        q_.collect(prefix + ".q", out);
        k_.collect(prefix + ".k", out);
        v_.collect(prefix + ".v", out);
        proj_.collect(prefix + ".proj", out);
    }

private:
    int ch_ = 0;
    ChannelLayerNorm<Real> norm_;
    Conv2d<Real> q_, k_, v_, proj_;
    TensorT<Real> attn_, q_cache_, k_cache_, v_cache_;
};

// ---------------------------------------------------------------------------
// Adam with bias correction. Moment buffers are addressed by parameter name
// so optimizer state survives checkpointing.
// ---------------------------------------------------------------------------
template <typename Real>
class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<NamedParam<Real>>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (const auto& np : params) {
            auto& slot = state_[np.name];
            if (slot.m.size() != np.param->size()) {
                slot.m = TensorT<Real>(np.param->value.shape);
                slot.v = TensorT<Real>(np.param->value.shape);
            }
            auto& val = np.param->value;
            auto& grad = np.param->g();
            for (int64_t i = 0; i < val.size(); ++i) {
                double g = static_cast<double>(grad.data[i]);
                double m = beta1_ * slot.m.data[i] + (1.0 - beta1_) * g;
                double v = beta2_ * slot.v.data[i] + (1.0 - beta2_) * g * g;
                slot.m.data[i] = static_cast<Real>(m);
                slot.v.data[i] = static_cast<Real>(v);
                val.data[i] -= static_cast<Real>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
        }
    }

    struct Slot {
        TensorT<Real> m, v;
    };

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    double learning_rate() const { return lr_; }
    std::map<std::string, Slot>& state() { return state_; }
    const std::map<std::string, Slot>& state() const { return state_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, Slot> state_;
};

template <typename Real>
void zero_grads(const std::vector<NamedParam<Real>>& params) {
    for (const auto& np : params) np.param->zero_grad();
}

template <typename Real>
int64_t total_parameter_count(const std::vector<NamedParam<Real>>& params) {
    int64_t n = 0;
    for (const auto& np : params) n += np.param->size();
    return n;
}

}  // namespace lightdiff::nn

#endif
