#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lightdiff/trainer.hpp"
#include "test_support.hpp"

using namespace lightdiff;
using namespace testsupport;

namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_net_config() {
    NetworkConfig cfg;
    cfg.image_channels = 3;
    cfg.base_channels = 4;
    cfg.channel_multipliers = {1, 2};
    cfg.blocks_per_level = 1;
    return cfg;
}

std::vector<TrainPair<float>> tiny_dataset(int count, int size, uint64_t seed) {
    std::vector<TrainPair<float>> pairs;
    for (int i = 0; i < count; ++i) {
        TrainPair<float> p;
        p.normal = procedural_image<float>(size, size, seed + static_cast<uint64_t>(i));
        p.low = p.normal;
        for (auto& v : p.low.data) v = static_cast<float>(0.4 * std::pow(v, 2.0));
        p.id = "pair" + std::to_string(i);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<std::pair<int64_t, double>> read_metrics(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is);
    std::vector<std::pair<int64_t, double>> rows;
    int64_t iter;
    double loss, ms;
    while (is >> iter >> loss >> ms) rows.push_back({iter, loss});
    return rows;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("smooth_l1 reproduces the tabulated values") {
    TensorT<double> zero({3, 2, 2});
    REQUIRE(smooth_l1(zero, zero, 1.0) == 0.0);

    TensorT<double> target({1}), pred({1});
    target[0] = 0.5;
    pred[0] = 0.0;
    REQUIRE(smooth_l1(target, pred, 1.0) == Catch::Approx(0.125).epsilon(1e-15));
    target[0] = 2.0;
    REQUIRE(smooth_l1(target, pred, 1.0) == Catch::Approx(1.5).epsilon(1e-15));

    TensorT<double> other({2});
    REQUIRE_THROWS_AS(smooth_l1(target, other, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(smooth_l1(target, pred, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(smooth_l1(target, pred, -1.0), std::invalid_argument);
}

TEST_CASE("smooth_l1 gradient matches finite differences in both branches") {
    for (double d0 : {0.5, 2.0}) {
        TensorT<double> target({1}), pred({1});
        target[0] = d0;
        pred[0] = 0.0;
        TensorT<double> grad = smooth_l1_grad(target, pred, 1.0);
        const double h = 1e-7;
        pred[0] = h;
        double fp = smooth_l1(target, pred, 1.0);
        pred[0] = -h;
        double fm = smooth_l1(target, pred, 1.0);
        double numeric = (fp - fm) / (2 * h);
        REQUIRE(grad[0] == Catch::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("smooth_l1 is continuous at the branch point") {
    const double eps = 1.0, delta = 1e-7;
    TensorT<double> target({1}), pred({1});
    pred[0] = 0.0;
    target[0] = eps - delta;
    double below = smooth_l1(target, pred, eps);
    target[0] = eps + delta;
    double above = smooth_l1(target, pred, eps);
    REQUIRE(below == Catch::Approx(0.5 * eps).margin(2e-7));
    REQUIRE(above == Catch::Approx(0.5 * eps).margin(2e-7));
    REQUIRE(std::abs(above - below) < 3e-7);
    // slope approaches 1 from both sides
    target[0] = eps - delta;
    TensorT<double> g1 = smooth_l1_grad(target, pred, eps);
    target[0] = eps + delta;
    TensorT<double> g2 = smooth_l1_grad(target, pred, eps);
    REQUIRE(g1[0] == Catch::Approx(g2[0]).margin(1e-6));
}

TEST_CASE("training on one repeated batch drives the loss down") {
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = constant_resolution_schedule(8, 8, 8);
    DenoiserNetwork<float> net(tiny_net_config(), 1);
    ChromaBalancer<float> cb(ChromaConfig{}, 2);
    auto params = net.parameters("denoiser");
    {
        auto cbp = cb.parameters("chroma");
        params.insert(params.end(), cbp.begin(), cbp.end());
    }
    nn::Adam<float> adam(1e-3);
    NoiseStream stream(3);
    auto pairs = tiny_dataset(1, 8, 50);
    std::vector<const TrainPair<float>*> batch{&pairs[0], &pairs[0]};

    LossConfig loss_cfg;
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step)
        losses.push_back(
            train_step(batch, net, cb, adam, params, ns, rs, stream, loss_cfg, /*forced t*/ 4));
    for (size_t i = 0; i + 50 < losses.size(); ++i) REQUIRE(losses[i + 50] < losses[i]);
}

TEST_CASE("a training step with nonzero loss moves chroma parameters") {
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = constant_resolution_schedule(8, 8, 8);
    DenoiserNetwork<float> net(tiny_net_config(), 4);
    ChromaBalancer<float> cb(ChromaConfig{}, 5);
    auto net_params = net.parameters("denoiser");
    auto cb_params = cb.parameters("chroma");
    std::vector<TensorT<float>> before;
    for (const auto& np : cb_params) before.push_back(np.param->value);

    auto params = net_params;
    params.insert(params.end(), cb_params.begin(), cb_params.end());
    nn::Adam<float> adam(1e-3);
    NoiseStream stream(6);
    auto pairs = tiny_dataset(2, 8, 60);
    std::vector<const TrainPair<float>*> batch{&pairs[0], &pairs[1]};
    double loss = train_step(batch, net, cb, adam, params, ns, rs, stream, LossConfig{});
    REQUIRE(loss > 0.0);
    bool any_changed = false;
    for (size_t i = 0; i < cb_params.size(); ++i)
        if (!bitwise_equal(cb_params[i].param->value, before[i])) any_changed = true;
    REQUIRE(any_changed);

    std::vector<const TrainPair<float>*> empty;
    REQUIRE_THROWS_AS(train_step(empty, net, cb, adam, params, ns, rs, stream, LossConfig{}),
                      std::invalid_argument);
    LossConfig bad;
    bad.epsilon = 0.0;
    REQUIRE_THROWS_AS(train_step(batch, net, cb, adam, params, ns, rs, stream, bad),
                      std::invalid_argument);
}

TEST_CASE("fit rejects an empty dataset before doing any work") {
    TrainConfig cfg;
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = constant_resolution_schedule(8, 8, 8);
    DenoiserNetwork<float> net(tiny_net_config(), 7);
    ChromaBalancer<float> cb(ChromaConfig{}, 8);
    std::vector<TrainPair<float>> empty;
    REQUIRE_THROWS_AS(fit(cfg, empty, ns, rs, net, cb, "/tmp/lightdiff_never"),
                      std::invalid_argument);
}

TEST_CASE("resuming from a checkpoint reproduces the loss sequence exactly") {
    TempDir dir_a("lightdiff_fit_a"), dir_b("lightdiff_fit_b");
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = build_resolution_schedule(8, 8, 8);
    auto pairs = tiny_dataset(3, 8, 70);

    TrainConfig cfg;
    cfg.iterations = 20;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;
    cfg.checkpoint_interval = 10;

    DenoiserNetwork<float> net_a(tiny_net_config(), 9);
    ChromaBalancer<float> cb_a(ChromaConfig{}, 10);
    FitResult full = fit(cfg, pairs, ns, rs, net_a, cb_a, dir_a.path.string(), "echo");
    REQUIRE(full.iterations_run == 20);
    auto full_rows = read_metrics(full.metrics_path);
    REQUIRE(full_rows.size() == 20);

    std::string mid = (dir_a.path / checkpoint_filename(10)).string();
    REQUIRE(fs::exists(mid));
    DenoiserNetwork<float> net_b(tiny_net_config(), 12);  // different init: restored anyway
    ChromaBalancer<float> cb_b(ChromaConfig{}, 13);
    FitResult resumed = fit(cfg, pairs, ns, rs, net_b, cb_b, dir_b.path.string(), "echo", mid);
    auto resumed_rows = read_metrics(resumed.metrics_path);
    REQUIRE(resumed_rows.size() == 10);
    for (size_t i = 0; i < 10; ++i) {
        REQUIRE(resumed_rows[i].first == full_rows[i + 10].first);
        REQUIRE(resumed_rows[i].second == full_rows[i + 10].second);
    }
}

TEST_CASE("checkpoints round-trip networks bit-exactly") {
    TempDir dir("lightdiff_ckpt");
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = build_resolution_schedule(8, 8, 8);
    NetworkConfig net_cfg = tiny_net_config();
    DenoiserNetwork<float> net(net_cfg, 14);
    ChromaBalancer<float> cb(ChromaConfig{}, 15);
    auto params = net.parameters("denoiser");
    {
        auto cbp = cb.parameters("chroma");
        params.insert(params.end(), cbp.begin(), cbp.end());
    }
    NoiseStream jitter(16);
    for (auto& np : params) jitter.fill_uniform(np.param->value.data, -0.2, 0.2);

    nn::Adam<float> adam(2e-4);
    NoiseStream stream(17, 123);
    CheckpointData data = make_checkpoint(params, adam, ns, rs, net_cfg, cb.config(),
                                          "config text here", stream, 42);
    std::string path = (dir.path / "ck.ltd").string();
    save_checkpoint(path, data);

    CheckpointData loaded = load_checkpoint(path);
    REQUIRE(loaded.version == kCheckpointVersion);
    REQUIRE(loaded.config_text == "config text here");
    REQUIRE(loaded.iteration == 42);
    REQUIRE(loaded.rng_seed == 17);
    REQUIRE(loaded.rng_position == 123);
    REQUIRE(loaded.betas == ns.betas);
    REQUIRE(loaded.boundaries == rs.boundaries);

    DenoiserNetwork<float> net2(loaded.net_config, 99);
    ChromaBalancer<float> cb2(loaded.chroma_config, 98);
    auto params2 = net2.parameters("denoiser");
    {
        auto cbp = cb2.parameters("chroma");
        params2.insert(params2.end(), cbp.begin(), cbp.end());
    }
    restore_parameters(loaded, params2);

    NoiseStream input_stream(18);
    TensorT<float> y = random_tensor<float>({3, 8, 8}, input_stream);
    TensorT<float> cond = random_tensor<float>({3, 8, 8}, input_stream);
    TensorT<float> o1 = net.forward(y, cond, 3, false);
    TensorT<float> o2 = net2.forward(y, cond, 3, false);
    REQUIRE(bitwise_equal(o1, o2));
    TensorT<float> c1 = cb.forward(o1, 3, false);
    TensorT<float> c2 = cb2.forward(o2, 3, false);
    REQUIRE(bitwise_equal(c1, c2));
}

TEST_CASE("checkpoint loader rejects foreign and future files") {
    TempDir dir("lightdiff_ckpt_bad");
    std::string garbage = (dir.path / "garbage.ltd").string();
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "this is not a checkpoint at all, just text long enough to read";
    }
    REQUIRE_THROWS_WITH(load_checkpoint(garbage), Catch::Matchers::ContainsSubstring("not a checkpoint"));

    // valid file with a bumped version: the error names both versions
    NoiseSchedule ns = build_noise_schedule(4, 0.05, 0.2);
    ResolutionSchedule rs = constant_resolution_schedule(4, 8, 8);
    DenoiserNetwork<float> net(tiny_net_config(), 19);
    nn::Adam<float> adam;
    NoiseStream stream(20);
    CheckpointData data = make_checkpoint(std::vector<nn::NamedParam<float>>{}, adam, ns, rs,
                                          tiny_net_config(), ChromaConfig{}, "", stream, 0);
    std::string path = (dir.path / "future.ltd").string();
    save_checkpoint(path, data);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        uint32_t v = 2;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    try {
        load_checkpoint(path);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("2") != std::string::npos);
        REQUIRE(msg.find("1") != std::string::npos);
    }

    REQUIRE_THROWS_AS(load_checkpoint((dir.path / "missing.ltd").string()), std::runtime_error);
}

TEST_CASE("ema shadow follows the decay recursion and lands in checkpoints") {
    TempDir dir("lightdiff_fit_ema");
    NoiseSchedule ns = build_noise_schedule(8, 0.05, 0.2);
    ResolutionSchedule rs = constant_resolution_schedule(8, 8, 8);
    auto pairs = tiny_dataset(2, 8, 80);
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.batch_size = 1;
    cfg.learning_rate = 1e-3;
    cfg.seed = 21;
    cfg.checkpoint_interval = 5;
    cfg.ema_decay = 0.5;
    DenoiserNetwork<float> net(tiny_net_config(), 22);
    ChromaBalancer<float> cb(ChromaConfig{}, 23);
    FitResult result = fit(cfg, pairs, ns, rs, net, cb, dir.path.string());
    CheckpointData data = load_checkpoint(result.checkpoint_path);
    bool has_ema = false, differs = false;
    for (const auto& [name, tensor] : data.arrays) {
        if (name.rfind("ema.", 0) != 0) continue;
        has_ema = true;
        const auto& raw = data.arrays.at(name.substr(4));
        for (int64_t i = 0; i < raw.size(); ++i)
            if (raw.data[i] != tensor.data[i]) differs = true;
    }
    REQUIRE(has_ema);
    REQUIRE(differs);  // shadow lags the live weights
}
