#ifndef LIGHTDIFF_CHROMA_HPP
#define LIGHTDIFF_CHROMA_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/nn.hpp"

namespace lightdiff {

struct ChromaConfig {
    int channels = 3;
    int hidden = 32;          // width of the descriptor embedding
    int reduction_ratio = 4;  // bottleneck = hidden / reduction_ratio
    int time_sin_dim = 32;

    int bottleneck() const { return std::max(1, hidden / reduction_ratio); }

    void validate() const {
        if (channels < 1 || hidden < 1 || reduction_ratio < 1 || time_sin_dim < 2 ||
            time_sin_dim % 2 != 0)
            throw std::invalid_argument("ChromaConfig: invalid sizes");
    }
};

/// Chroma Balancer: channel-attention corrector for the denoised estimate.
/// Squeeze path: global average pool -> descriptor embedding (+ step
/// embedding) -> bottleneck (reduce, nonlinearity) -> per-channel sigmoid
/// gates and a per-channel additive correction:
///
///   out = y ⊙ (2·sigmoid(gate_logits)) + correction
///
/// Both heads start zero-initialized: gates sit at sigmoid(0) = 1/2, the
/// doubled multiplier at exactly 1 and the correction at exactly 0, so a
/// fresh balancer is the identity map. The doubling also lets the
/// multiplicative path brighten a channel, not only attenuate it.
template <typename Real>
class ChromaBalancer {
public:
    explicit ChromaBalancer(ChromaConfig cfg = ChromaConfig{}, uint64_t init_seed = 1)
        : cfg_(cfg) {
        cfg_.validate();
        NoiseStream stream(init_seed);
        in_proj_ = nn::Linear<Real>(cfg_.channels, cfg_.hidden, stream);
        time_proj_ = nn::Linear<Real>(cfg_.time_sin_dim, cfg_.hidden, stream);
        reduce_ = nn::Linear<Real>(cfg_.hidden, cfg_.bottleneck(), stream);
        gate_head_ = nn::Linear<Real>(cfg_.bottleneck(), cfg_.channels, stream);
        corr_head_ = nn::Linear<Real>(cfg_.bottleneck(), cfg_.channels, stream);
        gate_head_.zero_init();
        corr_head_.zero_init();
    }

    const ChromaConfig& config() const { return cfg_; }

    TensorT<Real> forward(const TensorT<Real>& y0_est, int t, bool keep = false) {
        if (y0_est.rank() != 3 || y0_est.channels() != cfg_.channels)
            throw std::invalid_argument("cb_forward: expected " + std::to_string(cfg_.channels) +
                                        "-channel input, got " + shape_string(y0_est.shape));
        if (t < 1) throw std::invalid_argument("cb_forward: step must be >= 1");

        TensorT<Real> descr = nn::global_avg_pool(y0_est);
        TensorT<Real> h = in_proj_.forward(descr, keep);
        h += time_proj_.forward(time_sinusoid(t), keep);
        h = act1_.forward(h, keep);
        h = reduce_.forward(h, keep);
        h = act2_.forward(h, keep);
        TensorT<Real> gates = gate_sig_.forward(gate_head_.forward(h, keep), keep);
        TensorT<Real> corr = corr_head_.forward(h, keep);

        TensorT<Real> out(y0_est.shape);
        const int64_t hw = static_cast<int64_t>(y0_est.height()) * y0_est.width();
        for (int c = 0; c < cfg_.channels; ++c) {
            Real mul = Real(2) * gates[c];
            Real add = corr[c];
            for (int64_t p = 0; p < hw; ++p)
                out.data[c * hw + p] = y0_est.data[c * hw + p] * mul + add;
        }
        if (keep) {
            x_ = y0_est;
            gates_ = std::move(gates);
        }
        return out;
    }

    /// Gradient wrt the input estimate; parameter gradients accumulate.
    TensorT<Real> backward(const TensorT<Real>& gout) {
        const int64_t hw = static_cast<int64_t>(x_.height()) * x_.width();
        TensorT<Real> d_gates({cfg_.channels});
        TensorT<Real> d_corr({cfg_.channels});
        TensorT<Real> dx(x_.shape);
        for (int c = 0; c < cfg_.channels; ++c) {
            Real mul = Real(2) * gates_[c];
            Real dg = 0, dc = 0;
            for (int64_t p = 0; p < hw; ++p) {
                Real g = gout.data[c * hw + p];
                dg += g * x_.data[c * hw + p];
                dc += g;
                dx.data[c * hw + p] = g * mul;
            }
            d_gates[c] = Real(2) * dg;
            d_corr[c] = dc;
        }
        TensorT<Real> dh = gate_head_.backward(gate_sig_.backward(d_gates));
        dh += corr_head_.backward(d_corr);
        dh = act2_.backward(dh);
        dh = reduce_.backward(dh);
        dh = act1_.backward(dh);
        time_proj_.backward(dh);  // sinusoid has no upstream gradient
        TensorT<Real> d_descr = in_proj_.backward(dh);
        dx += nn::global_avg_pool_backward(d_descr, x_.height(), x_.width());
        return dx;
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        in_proj_.collect(prefix + ".in_proj", out);
        time_proj_.collect(prefix + ".time_proj", out);
        reduce_.collect(prefix + ".reduce", out);
        gate_head_.collect(prefix + ".gate_head", out);
        corr_head_.collect(prefix + ".corr_head", out);
    }

    std::vector<nn::NamedParam<Real>> parameters(const std::string& prefix = "chroma") {
        std::vector<nn::NamedParam<Real>> out;
        collect(prefix, out);
        return out;
    }

    /// Sigmoid gate values from the most recent kept forward; in (0,1).
    const TensorT<Real>& last_gates() const { return gates_; }

private:
    TensorT<Real> time_sinusoid(int t) const {
        TensorT<Real> e({cfg_.time_sin_dim});
        const int half = cfg_.time_sin_dim / 2;
        for (int i = 0; i < half; ++i) {
            double f = half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
            e[i] = static_cast<Real>(std::sin(t * f));
            e[half + i] = static_cast<Real>(std::cos(t * f));
        }
        return e;
    }

    ChromaConfig cfg_;
    nn::Linear<Real> in_proj_, time_proj_, reduce_, gate_head_, corr_head_;
    nn::SiLU<Real> act1_, act2_;
    nn::Sigmoid<Real> gate_sig_;
    TensorT<Real> x_, gates_;
};

}  // namespace lightdiff

#endif
