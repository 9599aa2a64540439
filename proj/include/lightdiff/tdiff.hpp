#ifndef LIGHTDIFF_TDIFF_HPP
#define LIGHTDIFF_TDIFF_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include "lightdiff/backbone.hpp"
#include "lightdiff/chroma.hpp"
#include "lightdiff/resize.hpp"
#include "lightdiff/rng.hpp"
#include "lightdiff/schedule.hpp"
#include "lightdiff/tensor.hpp"

namespace lightdiff {

enum class ReverseVariance {
    gamma_hat_t,     // 1 - gamma_hat_t at resolution-increase steps (default form)
    gamma_hat_prev,  // 1 - gamma_hat_{t-1} alternative
};

enum class UpsampleMode { bilinear, nearest };

struct SampleOptions {
    ReverseVariance reverse_variance = ReverseVariance::gamma_hat_t;
    UpsampleMode upsample = UpsampleMode::bilinear;
};

template <typename Real>
struct DiffusionState {
    int t = 0;
    TensorT<Real> y;
    const NoiseSchedule* noise_schedule = nullptr;
    const ResolutionSchedule* resolution_schedule = nullptr;
};

namespace detail {

template <typename Real>
void check_resolution(const TensorT<Real>& img, const ResolutionSchedule& rs, int t,
                      const char* what) {
    auto [h, w] = rs.resolution_at(t);
    if (img.rank() != 3 || img.height() != h || img.width() != w)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(h) + "x" +
                                    std::to_string(w) + " at step " + std::to_string(t) +
                                    ", got " + shape_string(img.shape));
}

template <typename Real>
TensorT<Real> upsample_to(const TensorT<Real>& x, int h, int w, UpsampleMode mode) {
    if (mode == UpsampleMode::nearest) {
        if (h % x.height() != 0 || h / x.height() != w / x.width())
            throw std::invalid_argument("upsample_to: non-integer factor");
        return nearest_upsample(x, h / x.height());
    }
    return bilinear_resize(x, h, w);
}

}  // namespace detail

/// One forward noising step: y_t = sqrt(gamma_t) * down(y_{t-1}) +
/// sqrt(beta_t) * noise. The downsample is stride-2 subsampling and only
/// fires when the schedule crosses a boundary between t-1 and t.
template <typename Real>
TensorT<Real> forward_step(const TensorT<Real>& y_prev, int t, const TensorT<Real>& noise,
                           const NoiseSchedule& ns, const ResolutionSchedule& rs) {
    ns.check_step(t);
    detail::check_resolution(y_prev, rs, t - 1, "forward_step: y_prev");
    detail::check_resolution(noise, rs, t, "forward_step: noise");
    auto [h_prev, w_prev] = rs.resolution_at(t - 1);
    auto [h, w] = rs.resolution_at(t);
    TensorT<Real> out = h == h_prev ? y_prev : subsample(y_prev, h_prev / h);
    const Real sg = static_cast<Real>(std::sqrt(ns.gamma(t)));
    const Real sb = static_cast<Real>(std::sqrt(ns.beta(t)));
    for (int64_t i = 0; i < out.size(); ++i)
        out.data[i] = sg * out.data[i] + sb * noise.data[i];
    return out;
}

/// Closed-form marginal of the forward chain:
/// y_t = sqrt(gamma_hat_t) * down(y_0) + sqrt(1 - gamma_hat_t) * noise.
/// Exact because subsampled i.i.d. noise stays i.i.d. with the same
/// per-pixel variance, so the per-step noise contributions telescope.
template <typename Real>
TensorT<Real> forward_marginal(const TensorT<Real>& y0, int t, const TensorT<Real>& noise,
                               const NoiseSchedule& ns, const ResolutionSchedule& rs) {
    ns.check_step(t);
    detail::check_resolution(y0, rs, 0, "forward_marginal: y0");
    detail::check_resolution(noise, rs, t, "forward_marginal: noise");
    auto [h, w] = rs.resolution_at(t);
    TensorT<Real> out = h == rs.base_h ? y0 : subsample(y0, rs.base_h / h);
    const double gh = ns.gamma_hat_at(t);
    const Real sg = static_cast<Real>(std::sqrt(gh));
    const Real sn = static_cast<Real>(std::sqrt(1.0 - gh));
    for (int64_t i = 0; i < out.size(); ++i)
        out.data[i] = sg * out.data[i] + sn * noise.data[i];
    return out;
}

/// One reverse step from y_t to y_{t-1}. At a resolution increase the state
/// is upsampled and renoised; otherwise the posterior mean over the
/// corrected estimate applies. The t = 1 step is deterministic.
template <typename Real>
TensorT<Real> reverse_step(const DiffusionState<Real>& state, const TensorT<Real>& y0_corrected,
                           const TensorT<Real>& noise, const SampleOptions& opts = {}) {
    const NoiseSchedule& ns = *state.noise_schedule;
    const ResolutionSchedule& rs = *state.resolution_schedule;
    const int t = state.t;
    if (t < 1) throw std::invalid_argument("reverse_step: t must be >= 1");
    ns.check_step(t);
    detail::check_resolution(state.y, rs, t, "reverse_step: y_t");
    detail::check_resolution(y0_corrected, rs, t, "reverse_step: y0 estimate");
    auto [h_prev, w_prev] = rs.resolution_at(t - 1);
    auto [h, w] = rs.resolution_at(t);
    const double gh_t = ns.gamma_hat_at(t);
    const double gh_prev = ns.gamma_hat_at(t - 1);

    if (h < h_prev) {  // resolution-increase branch: renoise the upsampled state
        detail::check_resolution(noise, rs, t - 1, "reverse_step: noise");
        TensorT<Real> out = detail::upsample_to(state.y, h_prev, w_prev, opts.upsample);
        const Real scale = static_cast<Real>(std::sqrt(gh_prev));
        const double var =
            opts.reverse_variance == ReverseVariance::gamma_hat_t ? 1.0 - gh_t : 1.0 - gh_prev;
        const Real sn = static_cast<Real>(std::sqrt(var));
        for (int64_t i = 0; i < out.size(); ++i)
            out.data[i] = scale * out.data[i] + sn * noise.data[i];
        return out;
    }

    const double beta = ns.beta(t);
    const double denom = 1.0 - gh_t;
    const Real c0 = static_cast<Real>(std::sqrt(gh_prev) * beta / denom);
    const Real c1 = static_cast<Real>(std::sqrt(ns.gamma(t)) * (1.0 - gh_prev) / denom);
    TensorT<Real> out(state.y.shape);
    for (int64_t i = 0; i < out.size(); ++i)
        out.data[i] = c0 * y0_corrected.data[i] + c1 * state.y.data[i];
    if (t > 1) {
        detail::check_resolution(noise, rs, t - 1, "reverse_step: noise");
        const Real sigma = static_cast<Real>(std::sqrt((1.0 - gh_prev) / denom * beta));
        for (int64_t i = 0; i < out.size(); ++i) out.data[i] += sigma * noise.data[i];
    }
    return out;
}

/// Full reverse pass: enhances a low-light condition image in [0,1] at the
/// base resolution. Internally the chain runs in [-1,1].
template <typename Real>
TensorT<Real> sample(const TensorT<Real>& condition, DenoiserNetwork<Real>& net,
                     ChromaBalancer<Real>& cb, const NoiseSchedule& ns,
                     const ResolutionSchedule& rs, NoiseStream& stream,
                     const SampleOptions& opts = {}) {
    detail::check_resolution(condition, rs, 0, "sample: condition");
    if (ns.steps != rs.steps)
        throw std::invalid_argument("sample: schedule step counts disagree");
    TensorT<Real> cond_m = condition;
    for (auto& v : cond_m.data) {
        if (v < Real(0) || v > Real(1))
            throw std::invalid_argument("sample: condition values must lie in [0,1]");
        v = Real(2) * v - Real(1);
    }

    auto [h_T, w_T] = rs.resolution_at(ns.steps);
    TensorT<Real> y = normal_like<Real>({condition.channels(), h_T, w_T}, stream);
    for (int t = ns.steps; t >= 1; --t) {
        auto [h, w] = rs.resolution_at(t);
        TensorT<Real> cond_t = smooth_resize(cond_m, h, w);
        TensorT<Real> estimate = net.forward(y, cond_t, t, /*keep=*/false);
        estimate = cb.forward(estimate, t, /*keep=*/false);
        estimate.clamp(Real(-1), Real(1));
        auto [h_prev, w_prev] = rs.resolution_at(t - 1);
        TensorT<Real> noise = t > 1
                                  ? normal_like<Real>({condition.channels(), h_prev, w_prev}, stream)
                                  : TensorT<Real>({condition.channels(), h_prev, w_prev});
        DiffusionState<Real> state{t, std::move(y), &ns, &rs};
        y = reverse_step(state, estimate, noise, opts);
        if (!y.all_finite())
            throw std::runtime_error("sample: non-finite state after reverse step t=" +
                                     std::to_string(t));
    }
    for (auto& v : y.data) v = (v + Real(1)) * Real(0.5);
    y.clamp(Real(0), Real(1));
    return y;
}

}  // namespace lightdiff

#endif
