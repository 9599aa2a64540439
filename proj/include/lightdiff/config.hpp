#ifndef LIGHTDIFF_CONFIG_HPP
#define LIGHTDIFF_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/backbone.hpp"
#include "lightdiff/chroma.hpp"
#include "lightdiff/degrade.hpp"
#include "lightdiff/schedule.hpp"
#include "lightdiff/tdiff.hpp"
#include "lightdiff/trainer.hpp"

namespace lightdiff {

/// Declarative schedule settings, resolved against the data resolution.
struct ScheduleSpec {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    enum class BoundaryMode { quarter, none, custom };
    BoundaryMode mode = BoundaryMode::quarter;
    std::vector<int> custom_boundaries;

    NoiseSchedule noise() const { return build_noise_schedule(steps, beta_start, beta_end); }

    ResolutionSchedule resolution(int base_h, int base_w) const {
        switch (mode) {
            case BoundaryMode::quarter: return build_resolution_schedule(steps, base_h, base_w);
            case BoundaryMode::none: return constant_resolution_schedule(steps, base_h, base_w);
            case BoundaryMode::custom:
                return resolution_schedule_with_boundaries(steps, base_h, base_w,
                                                           custom_boundaries);
        }
        throw std::logic_error("ScheduleSpec: bad mode");
    }
};

struct BenchSpec {
    int warmup = 2;
    int timed = 30;
};

/// The full configuration tree. Every field has a default; the resolved
/// tree serializes back to text and is echoed into checkpoints and
/// reports for provenance.
struct RunConfig {
    ScheduleSpec schedule;
    NetworkConfig network;
    ChromaConfig chroma;
    DegradeParams degrade;
    TrainConfig train;
    SampleOptions sample;
    BenchSpec bench;
    uint64_t seed = 0;

    void apply_seed(uint64_t s) {
        seed = s;
        degrade.seed = s;
        train.seed = s;
    }
};

namespace configdetail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw std::invalid_argument("config: " + key + " expects an integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: " + key + " expects a boolean, got '" + v + "'");
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_int(key, item));
    }
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace configdetail

/// Applies one "section.key = value" assignment; throws on unknown keys so
/// typos fail loudly instead of silently using defaults.
inline void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    using namespace configdetail;
    const std::string v = trim(value);
    if (key == "schedule.steps") cfg.schedule.steps = to_int(key, v);
    else if (key == "schedule.beta_start") cfg.schedule.beta_start = to_double(key, v);
    else if (key == "schedule.beta_end") cfg.schedule.beta_end = to_double(key, v);
    else if (key == "schedule.boundaries") {
        if (v == "quarter") cfg.schedule.mode = ScheduleSpec::BoundaryMode::quarter;
        else if (v == "none") cfg.schedule.mode = ScheduleSpec::BoundaryMode::none;
        else {
            cfg.schedule.mode = ScheduleSpec::BoundaryMode::custom;
            cfg.schedule.custom_boundaries = to_int_list(key, v);
        }
    }
    else if (key == "network.image_channels") cfg.network.image_channels = to_int(key, v);
    else if (key == "network.base_channels") cfg.network.base_channels = to_int(key, v);
    else if (key == "network.channel_multipliers")
        cfg.network.channel_multipliers = to_int_list(key, v);
    else if (key == "network.blocks_per_level") cfg.network.blocks_per_level = to_int(key, v);
    else if (key == "network.tlu_hidden_ratio") cfg.network.tlu_hidden_ratio = to_int(key, v);
    else if (key == "network.use_tlu") cfg.network.use_tlu = to_bool(key, v);
    else if (key == "network.attention_levels")
        cfg.network.attention_levels = v == "none" ? std::vector<int>{} : to_int_list(key, v);
    else if (key == "network.time_in_resblock") cfg.network.time_in_resblock = to_bool(key, v);
    else if (key == "chroma.hidden") cfg.chroma.hidden = to_int(key, v);
    else if (key == "chroma.reduction_ratio") cfg.chroma.reduction_ratio = to_int(key, v);
    else if (key == "chroma.time_sin_dim") cfg.chroma.time_sin_dim = to_int(key, v);
    else if (key == "degrade.gamma_min") cfg.degrade.gamma_min = to_double(key, v);
    else if (key == "degrade.gamma_max") cfg.degrade.gamma_max = to_double(key, v);
    else if (key == "degrade.illum_min") cfg.degrade.illum_min = to_double(key, v);
    else if (key == "degrade.illum_max") cfg.degrade.illum_max = to_double(key, v);
    else if (key == "train.iterations") cfg.train.iterations = to_int(key, v);
    else if (key == "train.batch_size") cfg.train.batch_size = to_int(key, v);
    else if (key == "train.learning_rate") cfg.train.learning_rate = to_double(key, v);
    else if (key == "train.checkpoint_interval") cfg.train.checkpoint_interval = to_int(key, v);
    else if (key == "train.loss_epsilon") cfg.train.loss.epsilon = to_double(key, v);
    else if (key == "train.ema_decay") cfg.train.ema_decay = to_double(key, v);
    else if (key == "sample.upsample") {
        if (v == "bilinear") cfg.sample.upsample = UpsampleMode::bilinear;
        else if (v == "nearest") cfg.sample.upsample = UpsampleMode::nearest;
        else throw std::invalid_argument("config: sample.upsample expects bilinear|nearest");
    }
    else if (key == "sample.reverse_variance") {
        if (v == "standard") cfg.sample.reverse_variance = ReverseVariance::gamma_hat_t;
        else if (v == "previous") cfg.sample.reverse_variance = ReverseVariance::gamma_hat_prev;
        else
            throw std::invalid_argument(
                "config: sample.reverse_variance expects standard|previous");
    }
    else if (key == "bench.warmup") cfg.bench.warmup = to_int(key, v);
    else if (key == "bench.timed") cfg.bench.timed = to_int(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Parses sectioned key/value text ('#' and ';' start comments).
inline void parse_config_text(RunConfig& cfg, const std::string& text) {
    using namespace configdetail;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " +
                                        std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        if (section.empty())
            throw std::invalid_argument("config: key '" + key + "' outside any section");
        apply_config_value(cfg, section + "." + key, line.substr(eq + 1));
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    parse_config_text(cfg, ss.str());
}

/// Canonical serialization of the fully-resolved tree.
inline std::string serialize_config(const RunConfig& cfg) {
    using namespace configdetail;
    std::ostringstream os;
    os << "[schedule]\n";
    os << "steps = " << cfg.schedule.steps << '\n';
    os << "beta_start = " << cfg.schedule.beta_start << '\n';
    os << "beta_end = " << cfg.schedule.beta_end << '\n';
    os << "boundaries = ";
    switch (cfg.schedule.mode) {
        case ScheduleSpec::BoundaryMode::quarter: os << "quarter"; break;
        case ScheduleSpec::BoundaryMode::none: os << "none"; break;
        case ScheduleSpec::BoundaryMode::custom: os << join_ints(cfg.schedule.custom_boundaries); break;
    }
    os << '\n';
    os << "\n[network]\n";
    os << "image_channels = " << cfg.network.image_channels << '\n';
    os << "base_channels = " << cfg.network.base_channels << '\n';
    os << "channel_multipliers = " << join_ints(cfg.network.channel_multipliers) << '\n';
    os << "blocks_per_level = " << cfg.network.blocks_per_level << '\n';
    os << "tlu_hidden_ratio = " << cfg.network.tlu_hidden_ratio << '\n';
    os << "use_tlu = " << (cfg.network.use_tlu ? "true" : "false") << '\n';
    os << "attention_levels = "
       << (cfg.network.attention_levels.empty() ? "none" : join_ints(cfg.network.attention_levels))
       << '\n';
    os << "time_in_resblock = " << (cfg.network.time_in_resblock ? "true" : "false") << '\n';
    os << "\n[chroma]\n";
    os << "hidden = " << cfg.chroma.hidden << '\n';
    os << "reduction_ratio = " << cfg.chroma.reduction_ratio << '\n';
    os << "time_sin_dim = " << cfg.chroma.time_sin_dim << '\n';
    os << "\n[degrade]\n";
    os << "gamma_min = " << cfg.degrade.gamma_min << '\n';
    os << "gamma_max = " << cfg.degrade.gamma_max << '\n';
    os << "illum_min = " << cfg.degrade.illum_min << '\n';
    os << "illum_max = " << cfg.degrade.illum_max << '\n';
    os << "\n[train]\n";
    os << "iterations = " << cfg.train.iterations << '\n';
    os << "batch_size = " << cfg.train.batch_size << '\n';
    os << "learning_rate = " << cfg.train.learning_rate << '\n';
    os << "checkpoint_interval = " << cfg.train.checkpoint_interval << '\n';
    os << "loss_epsilon = " << cfg.train.loss.epsilon << '\n';
    os << "ema_decay = " << cfg.train.ema_decay << '\n';
    os << "\n[sample]\n";
    os << "upsample = " << (cfg.sample.upsample == UpsampleMode::bilinear ? "bilinear" : "nearest")
       << '\n';
    os << "reverse_variance = "
       << (cfg.sample.reverse_variance == ReverseVariance::gamma_hat_t ? "standard" : "previous")
       << '\n';
    os << "\n[bench]\n";
    os << "warmup = " << cfg.bench.warmup << '\n';
    os << "timed = " << cfg.bench.timed << '\n';
    os << "\n# seed = " << cfg.seed << '\n';
    return os.str();
}

}  // namespace lightdiff

#endif
