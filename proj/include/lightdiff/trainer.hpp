#ifndef LIGHTDIFF_TRAINER_HPP
#define LIGHTDIFF_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/backbone.hpp"
#include "lightdiff/checkpoint.hpp"
#include "lightdiff/chroma.hpp"
#include "lightdiff/resize.hpp"
#include "lightdiff/tdiff.hpp"

namespace lightdiff {

struct LossConfig {
    double epsilon = 1.0;

    void validate() const {
        if (!(epsilon > 0.0)) throw std::invalid_argument("LossConfig: epsilon must be > 0");
    }
};

/// Mean SmoothL1: per element 0.5*d^2/eps for |d| < eps, |d| - 0.5*eps
/// otherwise, with d = target - prediction; averaged over all elements.
template <typename Real>
double smooth_l1(const TensorT<Real>& target, const TensorT<Real>& prediction, double epsilon) {
    if (!target.same_shape(prediction))
        throw std::invalid_argument("smooth_l1: shape mismatch " + shape_string(target.shape) +
                                    " vs " + shape_string(prediction.shape));
    if (!(epsilon > 0.0)) throw std::invalid_argument("smooth_l1: epsilon must be > 0");
    double acc = 0;
    for (int64_t i = 0; i < target.size(); ++i) {
        double d = static_cast<double>(target.data[i]) - static_cast<double>(prediction.data[i]);
        double a = std::abs(d);
        acc += a < epsilon ? 0.5 * d * d / epsilon : a - 0.5 * epsilon;
    }
    return acc / static_cast<double>(target.size());
}

/// Gradient of the mean SmoothL1 with respect to the prediction.
template <typename Real>
TensorT<Real> smooth_l1_grad(const TensorT<Real>& target, const TensorT<Real>& prediction,
                             double epsilon) {
    if (!target.same_shape(prediction)) throw std::invalid_argument("smooth_l1: shape mismatch");
    if (!(epsilon > 0.0)) throw std::invalid_argument("smooth_l1: epsilon must be > 0");
    TensorT<Real> grad(prediction.shape);
    const double inv_n = 1.0 / static_cast<double>(target.size());
    for (int64_t i = 0; i < target.size(); ++i) {
        double d = static_cast<double>(target.data[i]) - static_cast<double>(prediction.data[i]);
        double g = std::abs(d) < epsilon ? d / epsilon : (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
        grad.data[i] = static_cast<Real>(-g * inv_n);
    }
    return grad;
}

template <typename Real>
struct TrainPair {
    TensorT<Real> normal;  // target, [0,1]
    TensorT<Real> low;     // condition, [0,1]
    std::string id;
};

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 4;
    double learning_rate = 1e-4;
    uint64_t seed = 0;
    int checkpoint_interval = 1000;
    LossConfig loss;
    double ema_decay = 0.0;  // 0 disables the shadow weights
    int forced_step = 0;     // fix t for diagnostics; 0 samples uniformly

    void validate() const {
        if (iterations < 1 || batch_size < 1 || checkpoint_interval < 1)
            throw std::invalid_argument("TrainConfig: counts must be positive");
        if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: bad learning rate");
        if (ema_decay < 0.0 || ema_decay >= 1.0)
            throw std::invalid_argument("TrainConfig: ema_decay must be in [0,1)");
        loss.validate();
    }
};

namespace detail {

template <typename Real>
TensorT<Real> to_model_range(const TensorT<Real>& x) {
    TensorT<Real> out = x;
    for (auto& v : out.data) v = Real(2) * v - Real(1);
    return out;
}

}  // namespace detail

/// One optimization step over a batch of pairs: draw a step per sample,
/// noise the target through the closed-form marginal, predict, correct
/// through the Chroma Balancer, and take a joint Adam step on both
/// networks under the SmoothL1 objective against the downsampled target.
template <typename Real>
double train_step(const std::vector<const TrainPair<Real>*>& batch, DenoiserNetwork<Real>& net,
                  ChromaBalancer<Real>& cb, nn::Adam<Real>& adam,
                  const std::vector<nn::NamedParam<Real>>& params, const NoiseSchedule& ns,
                  const ResolutionSchedule& rs, NoiseStream& stream, const LossConfig& loss_cfg,
                  int forced_step = 0) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    loss_cfg.validate();
    nn::zero_grads(params);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const TrainPair<Real>& pair = *batch[i];
        int t = forced_step > 0 ? forced_step : static_cast<int>(stream.uniform_int(1, ns.steps));
        auto [h, w] = rs.resolution_at(t);
        TensorT<Real> y0m = detail::to_model_range(pair.normal);
        TensorT<Real> noise = normal_like<Real>({y0m.channels(), h, w}, stream);
        TensorT<Real> y_t = forward_marginal(y0m, t, noise, ns, rs);
        TensorT<Real> cond = smooth_resize(detail::to_model_range(pair.low), h, w);
        TensorT<Real> pred = net.forward(y_t, cond, t, /*keep=*/true);
        TensorT<Real> corrected = cb.forward(pred, t, /*keep=*/true);
        TensorT<Real> target = h == rs.base_h ? y0m : subsample(y0m, rs.base_h / h);
        double loss = smooth_l1(target, corrected, loss_cfg.epsilon);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_step: non-finite loss at t=" + std::to_string(t) +
                                     " sample=" + (pair.id.empty() ? std::to_string(i) : pair.id));
        TensorT<Real> grad = smooth_l1_grad(target, corrected, loss_cfg.epsilon);
        grad *= static_cast<Real>(inv_batch);
        net.backward(cb.backward(grad));
        total += loss * inv_batch;
    }
    adam.step(params);
    return total;
}

/// Exponential moving average of parameter values, keyed by name.
template <typename Real>
class EmaTracker {
public:
    void update(const std::vector<nn::NamedParam<Real>>& params, double decay) {
        for (const auto& np : params) {
            auto it = shadow_.find(np.name);
            if (it == shadow_.end()) {
                shadow_[np.name] = np.param->value;
                continue;
            }
            auto& s = it->second;
            for (int64_t i = 0; i < s.size(); ++i)
                s.data[i] = static_cast<Real>(decay * s.data[i] +
                                              (1.0 - decay) * np.param->value.data[i]);
        }
    }
    const std::map<std::string, TensorT<Real>>& shadow() const { return shadow_; }
    std::map<std::string, TensorT<Real>>& shadow() { return shadow_; }

private:
    std::map<std::string, TensorT<Real>> shadow_;
};

struct FitResult {
    std::string checkpoint_path;
    std::string metrics_path;
    double final_loss = 0;
    int64_t iterations_run = 0;
};

inline std::string checkpoint_filename(int64_t iter) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.ltd", static_cast<long long>(iter));
    return buf;
}

/// End-to-end training loop with per-iteration metrics logging, periodic
/// atomic checkpoints and deterministic resumption.
template <typename Real>
FitResult fit(const TrainConfig& cfg, const std::vector<TrainPair<Real>>& dataset,
              const NoiseSchedule& ns, const ResolutionSchedule& rs, DenoiserNetwork<Real>& net,
              ChromaBalancer<Real>& cb, const std::string& out_dir,
              const std::string& config_echo = "", const std::string& resume_path = "") {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("fit: dataset is empty");
    for (const auto& p : dataset) {
        if (p.normal.rank() != 3 || !p.normal.same_shape(p.low))
            throw std::invalid_argument("fit: malformed pair " + p.id);
        if (p.normal.height() != rs.base_h || p.normal.width() != rs.base_w)
            throw std::invalid_argument("fit: pair " + p.id + " is " +
                                        std::to_string(p.normal.height()) + "x" +
                                        std::to_string(p.normal.width()) + ", schedule expects " +
                                        std::to_string(rs.base_h) + "x" +
                                        std::to_string(rs.base_w));
    }

    std::filesystem::create_directories(out_dir);
    auto params = net.parameters("denoiser");
    {
        auto cb_params = cb.parameters("chroma");
        params.insert(params.end(), cb_params.begin(), cb_params.end());
    }
    nn::Adam<Real> adam(cfg.learning_rate);
    NoiseStream stream(cfg.seed);
    EmaTracker<Real> ema;
    int64_t start_iter = 0;

    if (!resume_path.empty()) {
        CheckpointData data = load_checkpoint(resume_path);
        restore_parameters(data, params);
        restore_adam(data, adam);
        restore_ema(data, ema.shadow());
        stream = NoiseStream(data.rng_seed, data.rng_position);
        start_iter = data.iteration;
    }

    FitResult result;
    result.metrics_path = (std::filesystem::path(out_dir) / "metrics.txt").string();
    std::ofstream metrics(result.metrics_path, start_iter > 0 ? std::ios::app : std::ios::out);
    if (!metrics) throw std::runtime_error("fit: cannot open metrics file " + result.metrics_path);

    auto save = [&](int64_t iter) {
        CheckpointData data = make_checkpoint(params, adam, ns, rs, net.config(), cb.config(),
                                              config_echo, stream, iter);
        for (const auto& [name, value] : ema.shadow())
            data.arrays["ema." + name] = value.template cast<double>();
        std::string path =
            (std::filesystem::path(out_dir) / checkpoint_filename(iter)).string();
        save_checkpoint(path, data);
        return path;
    };

    std::string last_path;
    for (int64_t iter = start_iter + 1; iter <= cfg.iterations; ++iter) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<const TrainPair<Real>*> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(
                &dataset[static_cast<size_t>(stream.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1))]);
        double loss =
            train_step(batch, net, cb, adam, params, ns, rs, stream, cfg.loss, cfg.forced_step);
        if (cfg.ema_decay > 0.0) ema.update(params, cfg.ema_decay);
        auto t1 = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        metrics << iter << ' ' << loss << ' ' << ms << '\n';
        metrics.flush();
        if (!metrics) throw std::runtime_error("fit: metrics write failed");
        result.final_loss = loss;
        result.iterations_run = iter;
        if (iter % cfg.checkpoint_interval == 0) last_path = save(iter);
    }
    if (result.iterations_run % cfg.checkpoint_interval != 0 || last_path.empty())
        last_path = save(std::max<int64_t>(result.iterations_run, start_iter));
    result.checkpoint_path = last_path;
    return result;
}

}  // namespace lightdiff

#endif
