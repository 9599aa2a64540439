#ifndef LIGHTDIFF_BACKBONE_HPP
#define LIGHTDIFF_BACKBONE_HPP

#include <algorithm>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/nn.hpp"

namespace lightdiff {

/// Shape of the denoiser. Parameter count is a pure function of this
/// struct — it never depends on the input resolution, which is what lets
/// one network serve every resolution stage of the timeline.
struct NetworkConfig {
    int image_channels = 3;
    int base_channels = 64;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int blocks_per_level = 2;
    int tlu_hidden_ratio = 2;
    bool use_tlu = true;
    std::vector<int> attention_levels = {};  // levels that append a self-attention block
    bool time_in_resblock = false;           // classic DDPM wiring, used by the baseline

    int num_levels() const { return static_cast<int>(channel_multipliers.size()); }
    int in_channels() const { return 2 * image_channels; }  // noisy image ⊕ condition
    int out_channels() const { return image_channels; }
    int time_dim() const { return 4 * base_channels; }
    int level_channels(int l) const { return base_channels * channel_multipliers.at(static_cast<size_t>(l)); }
    int spatial_divisor() const { return 1 << (num_levels() - 1); }

    void validate() const {
        if (num_levels() < 2) throw std::invalid_argument("NetworkConfig: need at least 2 levels");
        if (base_channels < 1 || image_channels < 1 || blocks_per_level < 1 ||
            tlu_hidden_ratio < 1)
            throw std::invalid_argument("NetworkConfig: counts must be positive");
        for (int m : channel_multipliers)
            if (m < 1) throw std::invalid_argument("NetworkConfig: multipliers must be positive");
        for (int l : attention_levels)
            if (l < 0 || l >= num_levels())
                throw std::invalid_argument("NetworkConfig: attention level out of range");
    }

    /// Default lightweight configuration (TLU blocks, no attention).
    static NetworkConfig light_default() { return NetworkConfig{}; }

    /// Reference-scale U-Net with attention ResBlocks at constant
    /// resolution. Exists for parameter and throughput comparisons only.
    static NetworkConfig vanilla_baseline() {
        NetworkConfig c;
        c.base_channels = 128;
        c.channel_multipliers = {1, 2, 4, 4};
        c.blocks_per_level = 2;
        c.use_tlu = false;
        c.attention_levels = {1, 2, 3};
        c.time_in_resblock = true;
        return c;
    }
};

/// Sinusoidal step encoding followed by a two-layer projection. Injective
/// over step indices by construction of the sinusoid frequencies.
template <typename Real>
class TimeEmbedding {
public:
    TimeEmbedding() = default;
    TimeEmbedding(int sin_dim, int out_dim, NoiseStream& stream)
        : sin_dim_(sin_dim), out_dim_(out_dim),
          fc1_(sin_dim, out_dim, stream), fc2_(out_dim, out_dim, stream) {
        if (sin_dim % 2 != 0) throw std::invalid_argument("TimeEmbedding: dim must be even");
    }

    TensorT<Real> sinusoid(int t) const {
        TensorT<Real> e({sin_dim_});
        const int half = sin_dim_ / 2;
        for (int i = 0; i < half; ++i) {
            double f = half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
            e[i] = static_cast<Real>(std::sin(t * f));
            e[half + i] = static_cast<Real>(std::cos(t * f));
        }
        return e;
    }

    TensorT<Real> forward(int t, bool keep) {
        TensorT<Real> h = fc1_.forward(sinusoid(t), keep);
        h = act_.forward(h, keep);
        return fc2_.forward(h, keep);
    }

    void backward(const TensorT<Real>& gout) {
        fc1_.backward(act_.backward(fc2_.backward(gout)));
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        fc1_.collect(prefix + ".fc1", out);
        fc2_.collect(prefix + ".fc2", out);
    }

    int out_dim() const { return out_dim_; }

private:
    int sin_dim_ = 0, out_dim_ = 0;
    nn::Linear<Real> fc1_, fc2_;
    nn::SiLU<Real> act_;
};

/// Temporal Light Unit: contract(silu(expand(norm(F + t)))) + F, where t is
/// a per-channel bias projected from the step embedding, expand/contract are
/// 1x1 convolutions around a hidden width of tlu_hidden_ratio * C, and the
/// contraction starts zero-initialized so the unit is the identity at init.
template <typename Real>
class Tlu {
public:
    Tlu() = default;
    Tlu(int channels, int hidden_ratio, int time_dim, NoiseStream& stream)
        : ch_(channels),
          norm_(channels),
          expand_(channels, channels * hidden_ratio, 1, stream),
          contract_(channels * hidden_ratio, channels, 1, stream),
          time_proj_(time_dim, channels, stream) {
        contract_.zero_init();
    }

    /// Core form: takes the already-projected per-channel time bias.
    TensorT<Real> forward(const TensorT<Real>& feat, const TensorT<Real>& time_bias, bool keep) {
        if (time_bias.size() != feat.channels())
            throw std::invalid_argument("tlu: time bias has " + std::to_string(time_bias.size()) +
                                        " channels, feature has " +
                                        std::to_string(feat.channels()));
        TensorT<Real> h = feat;
        nn::add_channel_bias(h, time_bias);
        h = norm_.forward(h, keep);
        h = expand_.forward(h, keep);
        h = act_.forward(h, keep);
        h = contract_.forward(h, keep);
        h += feat;
        return h;
    }

    /// Network path: projects the shared step embedding to this site's bias.
    TensorT<Real> forward_with_embedding(const TensorT<Real>& feat, const TensorT<Real>& temb,
                                         bool keep) {
        return forward(feat, time_proj_.forward(temb, keep), keep);
    }

    /// Returns (d_feat, d_time_bias).
    std::pair<TensorT<Real>, TensorT<Real>> backward(const TensorT<Real>& gout) {
        TensorT<Real> g = contract_.backward(gout);
        g = act_.backward(g);
        g = expand_.backward(g);
        g = norm_.backward(g);
        TensorT<Real> d_bias = nn::channel_bias_grad(g);
        g += gout;  // residual
        return {std::move(g), std::move(d_bias)};
    }

    /// Backward through the embedding projection as well; returns (d_feat, d_temb).
    std::pair<TensorT<Real>, TensorT<Real>> backward_with_embedding(const TensorT<Real>& gout) {
        auto [g, d_bias] = backward(gout);
        return {std::move(g), time_proj_.backward(d_bias)};
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        norm_.collect(prefix + ".norm", out);
        expand_.collect(prefix + ".expand", out);
        contract_.collect(prefix + ".contract", out);
        time_proj_.collect(prefix + ".time_proj", out);
    }

    nn::Conv2d<Real>& contract() { return contract_; }
    nn::Linear<Real>& time_proj() { return time_proj_; }

private:
    int ch_ = 0;
    nn::ChannelLayerNorm<Real> norm_;
    nn::Conv2d<Real> expand_, contract_;
    nn::SiLU<Real> act_;
    nn::Linear<Real> time_proj_;
};

/// Two 3x3 convolutions with pre-activation normalization and a skip
/// (1x1 when the channel count changes). The second convolution starts at
/// zero so a fresh block passes its skip through unchanged.
template <typename Real>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(int in_ch, int out_ch, int time_dim, bool use_time, NoiseStream& stream)
        : in_ch_(in_ch), out_ch_(out_ch), use_time_(use_time),
          norm1_(in_ch), conv1_(in_ch, out_ch, 3, stream),
          norm2_(out_ch), conv2_(out_ch, out_ch, 3, stream) {
        conv2_.zero_init();
        if (in_ch != out_ch) skip_.emplace(in_ch, out_ch, 1, stream);
        if (use_time) time_proj_.emplace(time_dim, out_ch, stream);
    }

    TensorT<Real> forward(const TensorT<Real>& x, const TensorT<Real>& temb, bool keep) {
        TensorT<Real> h = conv1_.forward(act1_.forward(norm1_.forward(x, keep), keep), keep);
        if (use_time_)
            nn::add_channel_bias(h, time_proj_->forward(time_act_.forward(temb, keep), keep));
        h = conv2_.forward(act2_.forward(norm2_.forward(h, keep), keep), keep);
        h += skip_ ? skip_->forward(x, keep) : x;
        return h;
    }

    std::pair<TensorT<Real>, TensorT<Real>> backward(const TensorT<Real>& gout) {
        TensorT<Real> g = conv2_.backward(gout);
        g = act2_.backward(g);
        g = norm2_.backward(g);
        TensorT<Real> d_temb;
        if (use_time_) {
            d_temb = time_act_.backward(time_proj_->backward(nn::channel_bias_grad(g)));
        }
        g = conv1_.backward(g);
        g = act1_.backward(g);
        g = norm1_.backward(g);
        g += skip_ ? skip_->backward(gout) : gout;
        return {std::move(g), std::move(d_temb)};
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        norm1_.collect(prefix + ".norm1", out);
        conv1_.collect(prefix + ".conv1", out);
        norm2_.collect(prefix + ".norm2", out);
        conv2_.collect(prefix + ".conv2", out);
        if (skip_) skip_->collect(prefix + ".skip", out);
        if (time_proj_) time_proj_->collect(prefix + ".time_proj", out);
    }

private:
    int in_ch_ = 0, out_ch_ = 0;
    bool use_time_ = false;
    nn::ChannelLayerNorm<Real> norm1_;
    nn::Conv2d<Real> conv1_;
    nn::ChannelLayerNorm<Real> norm2_;
    nn::Conv2d<Real> conv2_;
    std::optional<nn::Conv2d<Real>> skip_;
    std::optional<nn::Linear<Real>> time_proj_;
    nn::SiLU<Real> act1_, act2_, time_act_;
};

/// Temporal Light Block (ResBlock + TLU), or the baseline variant
/// (ResBlock + self-attention), or a plain ResBlock.
template <typename Real>
class DenoiserBlock {
public:
    DenoiserBlock() = default;
    DenoiserBlock(int in_ch, int out_ch, const NetworkConfig& cfg, bool attention,
                  NoiseStream& stream)
        : res_(in_ch, out_ch, cfg.time_dim(), cfg.time_in_resblock, stream) {
        if (cfg.use_tlu) tlu_.emplace(out_ch, cfg.tlu_hidden_ratio, cfg.time_dim(), stream);
        if (attention) attn_.emplace(out_ch, stream);
    }

    TensorT<Real> forward(const TensorT<Real>& x, const TensorT<Real>& temb, bool keep) {
        TensorT<Real> h = res_.forward(x, temb, keep);
        if (tlu_) h = tlu_->forward_with_embedding(h, temb, keep);
        if (attn_) h = attn_->forward(h, keep);
        return h;
    }

    std::pair<TensorT<Real>, TensorT<Real>> backward(const TensorT<Real>& gout) {
        TensorT<Real> g = gout;
        TensorT<Real> d_temb;
        if (attn_) g = attn_->backward(g);
        if (tlu_) {
            auto [gf, dt] = tlu_->backward_with_embedding(g);
            g = std::move(gf);
            d_temb = std::move(dt);
        }
        auto [gx, dt_res] = res_.backward(g);
        if (dt_res.size()) {
            if (d_temb.size())
                d_temb += dt_res;
            else
                d_temb = std::move(dt_res);
        }
        return {std::move(gx), std::move(d_temb)};
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        res_.collect(prefix + ".res", out);
        if (tlu_) tlu_->collect(prefix + ".tlu", out);
        if (attn_) attn_->collect(prefix + ".attn", out);
    }

private:
    ResBlock<Real> res_;
    std::optional<Tlu<Real>> tlu_;
    std::optional<nn::SelfAttention2d<Real>> attn_;
};

template <typename Real>
class Downsample {
public:
    Downsample() = default;
    Downsample(int channels, NoiseStream& stream) : conv_(channels, channels, 3, stream) {}
    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        return conv_.forward(nn::avg_pool2(x), keep);
    }
    TensorT<Real> backward(const TensorT<Real>& gout) {
        return nn::avg_pool2_backward(conv_.backward(gout));
    }
    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        conv_.collect(prefix + ".conv", out);
    }

private:
    nn::Conv2d<Real> conv_;
};

template <typename Real>
class Upsample {
public:
    Upsample() = default;
    Upsample(int channels, NoiseStream& stream) : conv_(channels, channels, 3, stream) {}
    TensorT<Real> forward(const TensorT<Real>& x, bool keep) {
        return conv_.forward(nn::nearest_up2(x), keep);
    }
    TensorT<Real> backward(const TensorT<Real>& gout) {
        return nn::nearest_up2_backward(conv_.backward(gout));
    }
    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        conv_.collect(prefix + ".conv", out);
    }

private:
    nn::Conv2d<Real> conv_;
};

/// U-Net denoiser over Temporal Light Blocks. Takes the noisy image
/// concatenated channelwise with the condition image plus a step index,
/// and predicts the clean image directly (not the noise).
template <typename Real>
class DenoiserNetwork {
public:
    explicit DenoiserNetwork(NetworkConfig cfg = NetworkConfig{}, uint64_t init_seed = 0)
        : cfg_(std::move(cfg)) {
        cfg_.validate();
        NoiseStream stream(init_seed);
        const int L = cfg_.num_levels();
        const int B = cfg_.blocks_per_level;
        temb_ = TimeEmbedding<Real>(cfg_.base_channels, cfg_.time_dim(), stream);
        conv_in_ = nn::Conv2d<Real>(cfg_.in_channels(), cfg_.base_channels, 3, stream);
        enc_.resize(static_cast<size_t>(L));
        int ch = cfg_.base_channels;
        for (int l = 0; l < L; ++l) {
            bool attn = has_attention(l);
            for (int b = 0; b < B; ++b) {
                enc_[l].blocks.emplace_back(ch, cfg_.level_channels(l), cfg_, attn, stream);
                ch = cfg_.level_channels(l);
            }
            if (l < L - 1) enc_[l].down.emplace(ch, stream);
        }
        mid1_ = DenoiserBlock<Real>(ch, ch, cfg_, has_attention(L - 1), stream);
        mid2_ = DenoiserBlock<Real>(ch, ch, cfg_, false, stream);
        dec_.resize(static_cast<size_t>(L));
        for (int l = L - 1; l >= 0; --l) {
            bool attn = has_attention(l);
            for (int b = 0; b <= B; ++b) {
                int skip_ch = skip_channels(l, b);
                dec_[l].blocks.emplace_back(ch + skip_ch, cfg_.level_channels(l), cfg_, attn,
                                            stream);
                ch = cfg_.level_channels(l);
            }
            if (l > 0) dec_[l].up.emplace(ch, stream);
        }
        out_norm_ = nn::ChannelLayerNorm<Real>(ch);
        conv_out_ = nn::Conv2d<Real>(ch, cfg_.out_channels(), 3, stream);
        conv_out_.zero_init();  // fresh network predicts zero
    }

    const NetworkConfig& config() const { return cfg_; }

    /// Convenience overload concatenating noisy input and condition.
    TensorT<Real> forward(const TensorT<Real>& y_t, const TensorT<Real>& condition, int t,
                          bool keep = false) {
        if (!y_t.same_shape(condition))
            throw std::invalid_argument("denoise_forward: noisy input " +
                                        shape_string(y_t.shape) + " vs condition " +
                                        shape_string(condition.shape));
        return forward(concat_channels(y_t, condition), t, keep);
    }

    TensorT<Real> forward(const TensorT<Real>& x, int t, bool keep = false) {
        if (x.rank() != 3 || x.channels() != cfg_.in_channels())
            throw std::invalid_argument("denoise_forward: expected " +
                                        std::to_string(cfg_.in_channels()) + " input channels");
        const int div = cfg_.spatial_divisor();
        if (x.height() % div != 0 || x.width() % div != 0)
            throw std::invalid_argument("denoise_forward: spatial dims " +
                                        std::to_string(x.height()) + "x" +
                                        std::to_string(x.width()) + " not divisible by " +
                                        std::to_string(div));
        if (t < 1) throw std::invalid_argument("denoise_forward: step must be >= 1");

        const int L = cfg_.num_levels();
        const int B = cfg_.blocks_per_level;
        TensorT<Real> temb = temb_.forward(t, keep);
        std::vector<TensorT<Real>> skips;
        TensorT<Real> h = conv_in_.forward(x, keep);
        skips.push_back(h);
        for (int l = 0; l < L; ++l) {
            for (int b = 0; b < B; ++b) {
                h = enc_[l].blocks[static_cast<size_t>(b)].forward(h, temb, keep);
                skips.push_back(h);
            }
            if (l < L - 1) {
                h = enc_[l].down->forward(h, keep);
                skips.push_back(h);
            }
        }
        h = mid1_.forward(h, temb, keep);
        h = mid2_.forward(h, temb, keep);
        for (int l = L - 1; l >= 0; --l) {
            for (int b = 0; b <= B; ++b) {
                TensorT<Real> skip = std::move(skips.back());
                skips.pop_back();
                h = dec_[l].blocks[static_cast<size_t>(b)].forward(concat_channels(h, skip), temb,
                                                                   keep);
            }
            if (l > 0) h = dec_[l].up->forward(h, keep);
        }
        h = conv_out_.forward(out_act_.forward(out_norm_.forward(h, keep), keep), keep);
        return h;
    }

    /// Backpropagates through the whole network, accumulating parameter
    /// gradients; returns the gradient with respect to the concatenated input.
    TensorT<Real> backward(const TensorT<Real>& gout) {
        const int L = cfg_.num_levels();
        const int B = cfg_.blocks_per_level;
        const int total_skips = 1 + L * B + (L - 1);
        std::vector<TensorT<Real>> skip_grads(static_cast<size_t>(total_skips));
        TensorT<Real> d_temb;
        auto add_temb = [&](TensorT<Real>&& dt) {
            if (!dt.size()) return;
            if (d_temb.size())
                d_temb += dt;
            else
                d_temb = std::move(dt);
        };

        TensorT<Real> g = conv_out_.backward(gout);
        g = out_act_.backward(g);
        g = out_norm_.backward(g);

        int pop = 0;  // mirrors the forward pop order: backward visits it reversed
        for (int l = 0; l < L; ++l) {
            if (l > 0) g = dec_[l].up->backward(g);
            for (int b = B; b >= 0; --b) {
                auto [gx, dt] = dec_[l].blocks[static_cast<size_t>(b)].backward(g);
                add_temb(std::move(dt));
                int cur_ch = gx.channels() - skip_channels(l, b);
                skip_grads[static_cast<size_t>(pop)] =
                    take_channels(gx, cur_ch, skip_channels(l, b));
                g = take_channels(gx, 0, cur_ch);
                ++pop;
            }
        }

        {
            auto [g2, dt2] = mid2_.backward(g);
            add_temb(std::move(dt2));
            auto [g1, dt1] = mid1_.backward(g2);
            add_temb(std::move(dt1));
            g = std::move(g1);
        }

        int push = total_skips - 1;
        for (int l = L - 1; l >= 0; --l) {
            if (l < L - 1) {
                g += skip_grads[static_cast<size_t>(push--)];
                g = enc_[l].down->backward(g);
            }
            for (int b = B - 1; b >= 0; --b) {
                g += skip_grads[static_cast<size_t>(push--)];
                auto [gx, dt] = enc_[l].blocks[static_cast<size_t>(b)].backward(g);
                add_temb(std::move(dt));
                g = std::move(gx);
            }
        }
        g += skip_grads[0];
        g = conv_in_.backward(g);
        if (d_temb.size()) temb_.backward(d_temb);
        return g;
    }

    void collect(const std::string& prefix, std::vector<nn::NamedParam<Real>>& out) {
        temb_.collect(prefix + ".temb", out);
        conv_in_.collect(prefix + ".conv_in", out);
        for (size_t l = 0; l < enc_.size(); ++l) {
            for (size_t b = 0; b < enc_[l].blocks.size(); ++b)
                enc_[l].blocks[b].collect(prefix + ".enc" + std::to_string(l) + ".b" +
                                              std::to_string(b),
                                          out);
            if (enc_[l].down)
                enc_[l].down->collect(prefix + ".enc" + std::to_string(l) + ".down", out);
        }
        mid1_.collect(prefix + ".mid1", out);
        mid2_.collect(prefix + ".mid2", out);
        for (size_t l = 0; l < dec_.size(); ++l) {
            for (size_t b = 0; b < dec_[l].blocks.size(); ++b)
                dec_[l].blocks[b].collect(prefix + ".dec" + std::to_string(l) + ".b" +
                                              std::to_string(b),
                                          out);
            if (dec_[l].up) dec_[l].up->collect(prefix + ".dec" + std::to_string(l) + ".up", out);
        }
        out_norm_.collect(prefix + ".out_norm", out);
        conv_out_.collect(prefix + ".conv_out", out);
    }

    std::vector<nn::NamedParam<Real>> parameters(const std::string& prefix = "denoiser") {
        std::vector<nn::NamedParam<Real>> out;
        collect(prefix, out);
        return out;
    }

    nn::Conv2d<Real>& final_conv() { return conv_out_; }

private:
    bool has_attention(int level) const {
        return std::find(cfg_.attention_levels.begin(), cfg_.attention_levels.end(), level) !=
               cfg_.attention_levels.end();
    }

    /// Channel width of the skip tensor consumed by decoder block (l, b).
    /// Follows the stack discipline of the encoder pushes.
    int skip_channels(int l, int b) const {
        const int B = cfg_.blocks_per_level;
        if (b < B) return cfg_.level_channels(l);  // same-level block outputs
        // final block of the level pops the tensor from before this level:
        // the previous level's downsample output, or the stem at level 0
        return l > 0 ? cfg_.level_channels(l - 1) : cfg_.base_channels;
    }

    struct EncLevel {
        std::vector<DenoiserBlock<Real>> blocks;
        std::optional<Downsample<Real>> down;
    };
    struct DecLevel {
        std::vector<DenoiserBlock<Real>> blocks;
        std::optional<Upsample<Real>> up;
    };

    NetworkConfig cfg_;
    TimeEmbedding<Real> temb_;
    nn::Conv2d<Real> conv_in_;
    std::vector<EncLevel> enc_;
    DenoiserBlock<Real> mid1_, mid2_;
    std::vector<DecLevel> dec_;
    nn::ChannelLayerNorm<Real> out_norm_;
    nn::SiLU<Real> out_act_;
    nn::Conv2d<Real> conv_out_;
};

/// Exact scalar parameter count.
template <typename Real>
int64_t count_parameters(DenoiserNetwork<Real>& net) {
    return nn::total_parameter_count(net.parameters());
}

inline double to_millions(int64_t count) { return static_cast<double>(count) / 1e6; }

}  // namespace lightdiff

#endif
