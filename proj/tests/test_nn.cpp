#include <catch_amalgamated.hpp>
#include <cmath>

#include "lightdiff/nn.hpp"
#include "test_support.hpp"

using namespace lightdiff;
using namespace testsupport;

namespace {

// direct convolution, no im2col: the oracle for Conv2d::forward
template <typename Real>
TensorT<Real> conv_direct(const TensorT<Real>& x, const nn::Conv2d<Real>& conv, int in_ch,
                          int out_ch, int k) {
    int pad = k / 2;
    TensorT<Real> out({out_ch, x.height(), x.width()});
    for (int o = 0; o < out_ch; ++o)
        for (int y = 0; y < x.height(); ++y)
            for (int xx = 0; xx < x.width(); ++xx) {
                double acc = conv.bias.value[o];
                for (int c = 0; c < in_ch; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int sy = y + ky - pad, sx = xx + kx - pad;
                            if (sy < 0 || sy >= x.height() || sx < 0 || sx >= x.width()) continue;
                            acc += conv.weight.value[(o * in_ch + c) * k * k + ky * k + kx] *
                                   x.at(c, sy, sx);
                        }
                out.at(o, y, xx) = static_cast<Real>(acc);
            }
    return out;
}

}  // namespace

TEST_CASE("Conv2d forward matches a direct convolution") {
    NoiseStream stream(1);
    nn::Conv2d<double> conv(3, 5, 3, stream);
    TensorT<double> x = random_tensor<double>({3, 7, 6}, stream);
    TensorT<double> got = conv.forward(x, false);
    TensorT<double> want = conv_direct(x, conv, 3, 5, 3);
    REQUIRE(max_abs_diff(got, want) < 1e-12);

    nn::Conv2d<double> one(4, 2, 1, stream);
    TensorT<double> x1 = random_tensor<double>({4, 5, 5}, stream);
    REQUIRE(max_abs_diff(one.forward(x1, false), conv_direct(x1, one, 4, 2, 1)) < 1e-12);
}

TEST_CASE("Conv2d rejects channel mismatch") {
    NoiseStream stream(2);
    nn::Conv2d<float> conv(3, 4, 3, stream);
    TensorT<float> x({2, 4, 4});
    REQUIRE_THROWS_AS(conv.forward(x, false), std::invalid_argument);
}

TEST_CASE("Conv2d gradients match finite differences") {
    NoiseStream stream(3);
    for (int k : {1, 3}) {
        nn::Conv2d<double> conv(2, 3, k, stream);
        TensorT<double> x = random_tensor<double>({2, 5, 4}, stream);
        Projection<double> proj({3, 5, 4});
        std::vector<nn::NamedParam<double>> params;
        conv.collect("conv", params);
        auto loss = [&] { return proj(conv.forward(x, false)); };
        TensorT<double> input_grad;
        auto backward = [&] {
            conv.forward(x, true);
            input_grad = conv.backward(proj.weights);
        };
        auto pc = check_parameter_gradients<double>(params, loss, backward);
        REQUIRE(pc.max_rel < 1e-7);
        auto ic = check_input_gradient(x, input_grad, loss);
        REQUIRE(ic.max_rel < 1e-7);
    }
}

TEST_CASE("Linear gradients match finite differences") {
    NoiseStream stream(4);
    nn::Linear<double> lin(6, 4, stream);
    TensorT<double> x = random_tensor<double>({6}, stream);
    Projection<double> proj({4});
    std::vector<nn::NamedParam<double>> params;
    lin.collect("lin", params);
    auto loss = [&] { return proj(lin.forward(x, false)); };
    TensorT<double> input_grad;
    auto backward = [&] {
        lin.forward(x, true);
        input_grad = lin.backward(proj.weights);
    };
    REQUIRE(check_parameter_gradients<double>(params, loss, backward).max_rel < 1e-8);
    REQUIRE(check_input_gradient(x, input_grad, loss).max_rel < 1e-8);
}

TEST_CASE("ChannelLayerNorm normalizes across channels at each position") {
    NoiseStream stream(5);
    nn::ChannelLayerNorm<double> norm(8);
    TensorT<double> x = random_tensor<double>({8, 3, 3}, stream, -2.0, 2.0);
    TensorT<double> y = norm.forward(x, false);
    for (int p = 0; p < 9; ++p) {
        double mean = 0, var = 0;
        for (int c = 0; c < 8; ++c) mean += y.data[c * 9 + p];
        mean /= 8;
        for (int c = 0; c < 8; ++c) {
            double d = y.data[c * 9 + p] - mean;
            var += d * d;
        }
        var /= 8;
        REQUIRE(std::abs(mean) < 1e-12);
        REQUIRE(var == Catch::Approx(1.0).margin(1e-4));  // eps shifts variance slightly
    }
}

TEST_CASE("ChannelLayerNorm gradients match finite differences") {
    NoiseStream stream(6);
    nn::ChannelLayerNorm<double> norm(4);
    TensorT<double> x = random_tensor<double>({4, 3, 2}, stream, -2.0, 2.0);
    for (int c = 0; c < 4; ++c) norm.gamma.value[c] = 0.5 + 0.3 * c;  // exercise the affine
    Projection<double> proj({4, 3, 2});
    std::vector<nn::NamedParam<double>> params;
    norm.collect("norm", params);
    auto loss = [&] { return proj(norm.forward(x, false)); };
    TensorT<double> input_grad;
    auto backward = [&] {
        norm.forward(x, true);
        input_grad = norm.backward(proj.weights);
    };
    REQUIRE(check_parameter_gradients<double>(params, loss, backward).max_rel < 1e-7);
    REQUIRE(check_input_gradient(x, input_grad, loss).max_rel < 1e-6);
}

TEST_CASE("activation gradients match finite differences") {
    NoiseStream stream(7);
    TensorT<double> x = random_tensor<double>({2, 3, 3}, stream, -3.0, 3.0);
    Projection<double> proj({2, 3, 3});

    nn::SiLU<double> silu;
    auto loss_s = [&] { return proj(silu.forward(x, false)); };
    silu.forward(x, true);
    TensorT<double> gs = silu.backward(proj.weights);
    REQUIRE(check_input_gradient(x, gs, loss_s).max_rel < 1e-8);

    nn::Sigmoid<double> sig;
    auto loss_g = [&] { return proj(sig.forward(x, false)); };
    sig.forward(x, true);
    TensorT<double> gg = sig.backward(proj.weights);
    REQUIRE(check_input_gradient(x, gg, loss_g).max_rel < 1e-8);
}

TEST_CASE("pooling and upsampling adjoints") {
    // for a linear map A, <A x, g> == <x, A^T g>; backward implements A^T
    NoiseStream stream(8);
    TensorT<double> x = random_tensor<double>({3, 6, 4}, stream);
    TensorT<double> g = random_tensor<double>({3, 3, 2}, stream);
    double lhs = 0, rhs = 0;
    TensorT<double> ax = nn::avg_pool2(x);
    TensorT<double> atg = nn::avg_pool2_backward(g);
    for (int64_t i = 0; i < ax.size(); ++i) lhs += ax.data[i] * g.data[i];
    for (int64_t i = 0; i < x.size(); ++i) rhs += x.data[i] * atg.data[i];
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));

    TensorT<double> gu = random_tensor<double>({3, 12, 8}, stream);
    TensorT<double> ux = nn::nearest_up2(x);
    TensorT<double> utg = nn::nearest_up2_backward(gu);
    lhs = rhs = 0;
    for (int64_t i = 0; i < ux.size(); ++i) lhs += ux.data[i] * gu.data[i];
    for (int64_t i = 0; i < x.size(); ++i) rhs += x.data[i] * utg.data[i];
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));

    TensorT<double> gv = random_tensor<double>({3}, stream);
    TensorT<double> px = nn::global_avg_pool(x);
    TensorT<double> ptg = nn::global_avg_pool_backward(gv, 6, 4);
    lhs = rhs = 0;
    for (int64_t i = 0; i < px.size(); ++i) lhs += px.data[i] * gv.data[i];
    for (int64_t i = 0; i < x.size(); ++i) rhs += x.data[i] * ptg.data[i];
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("self-attention gradients match finite differences") {
    NoiseStream stream(9);
    nn::SelfAttention2d<double> attn(3, stream);
    // zero-init proj would hide the attention path; randomize it
    std::vector<nn::NamedParam<double>> params;
    attn.collect("attn", params);
    for (auto& np : params)
        if (np.name == "attn.proj.weight") stream.fill_uniform(np.param->value.data, -0.4, 0.4);
    TensorT<double> x = random_tensor<double>({3, 4, 4}, stream);
    Projection<double> proj({3, 4, 4});
    auto loss = [&] { return proj(attn.forward(x, false)); };
    TensorT<double> input_grad;
    auto backward = [&] {
        attn.forward(x, true);
        input_grad = attn.backward(proj.weights);
    };
    REQUIRE(check_parameter_gradients<double>(params, loss, backward).max_rel < 1e-6);
    REQUIRE(check_input_gradient(x, input_grad, loss).max_rel < 1e-6);
}

TEST_CASE("Adam minimizes a quadratic deterministically") {
    auto run = [] {
        nn::Param<double> p;
        p.init({4});
        for (int i = 0; i < 4; ++i) p.value[i] = 2.0 + i;
        std::vector<nn::NamedParam<double>> params{{"p", &p}};
        nn::Adam<double> adam(0.1);
        for (int it = 0; it < 400; ++it) {
            nn::zero_grads(params);
            for (int i = 0; i < 4; ++i) p.grad[i] = 2.0 * (p.value[i] - 1.0);
            adam.step(params);
        }
        return p.value;
    };
    TensorT<double> a = run(), b = run();
    REQUIRE(bitwise_equal(a, b));
    for (int i = 0; i < 4; ++i) REQUIRE(a[i] == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("noise stream draws are pure functions of seed and position") {
    NoiseStream a(42), b(42);
    TensorT<double> ta({3, 5, 5}), tb({3, 5, 5});
    a.fill_normal(ta.data);
    b.fill_normal(tb.data);
    REQUIRE(bitwise_equal(ta, tb));
    REQUIRE(a.position() == 1);

    // consume, then rewind to the same position: identical draw
    a.fill_normal(ta.data);
    TensorT<double> t2({3, 5, 5});
    a.seek(1);
    a.fill_normal(t2.data);
    REQUIRE(bitwise_equal(ta, t2));

    // different seeds decorrelate
    NoiseStream c(43);
    TensorT<double> tc({3, 5, 5});
    c.fill_normal(tc.data);
    REQUIRE_FALSE(bitwise_equal(ta, tc));

    // substreams do not depend on parent consumption
    NoiseStream p1(7), p2(7);
    p2.uniform(0, 1);
    TensorT<double> s1({8}), s2({8});
    p1.substream(3).fill_normal(s1.data);
    p2.substream(3).fill_normal(s2.data);
    REQUIRE(bitwise_equal(s1, s2));
}

TEST_CASE("noise stream normals have sane moments") {
    NoiseStream stream(123);
    TensorT<double> t({100000});
    stream.fill_normal(t.data);
    double mean = t.mean();
    double var = 0;
    for (auto v : t.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.size());
    REQUIRE(mean == Catch::Approx(0.0).margin(0.02));
    REQUIRE(var == Catch::Approx(1.0).margin(0.02));
    double mx = 0;
    for (auto v : t.data) mx = std::max(mx, std::abs(v));
    REQUIRE(mx < 6.0);
    REQUIRE(mx > 3.0);
}

TEST_CASE("uniform int covers the range inclusively") {
    NoiseStream stream(5);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 2000; ++i) ++hits[static_cast<size_t>(stream.uniform_int(0, 4))];
    for (int h : hits) REQUIRE(h > 300);
}
