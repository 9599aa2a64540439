#ifndef LIGHTDIFF_CHECKPOINT_HPP
#define LIGHTDIFF_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/backbone.hpp"
#include "lightdiff/chroma.hpp"
#include "lightdiff/rng.hpp"
#include "lightdiff/schedule.hpp"

namespace lightdiff {

constexpr uint32_t kCheckpointMagic = 0x4644544c;  // "LTDF"
constexpr uint32_t kCheckpointVersion = 1;

/// Single-file training snapshot: named parameter arrays for both
/// networks, explicit schedule lists, the resolved config text, optimizer
/// moments and the RNG cursor. Arrays are stored as float64 regardless of
/// the in-memory scalar type.
struct CheckpointData {
    uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<double> betas;
    std::vector<int> boundaries;
    int base_h = 0, base_w = 0;
    NetworkConfig net_config;
    ChromaConfig chroma_config;
    uint64_t rng_seed = 0, rng_position = 0;
    int64_t iteration = 0;
    int64_t adam_step = 0;
    double learning_rate = 0;
    std::map<std::string, TensorT<double>> arrays;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    uint64_t n = read_pod<uint64_t>(is);
    if (n > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
    return s;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
    write_pod<uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& is) {
    uint64_t n = read_pod<uint64_t>(is);
    if (n > (1ull << 33)) throw std::runtime_error("checkpoint: corrupt array length");
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
    return v;
}

inline void write_ints(std::ostream& os, const std::vector<int>& v) {
    write_pod<uint64_t>(os, v.size());
    for (int x : v) write_pod<int32_t>(os, x);
}

inline std::vector<int> read_ints(std::istream& is) {
    uint64_t n = read_pod<uint64_t>(is);
    if (n > (1ull << 24)) throw std::runtime_error("checkpoint: corrupt list length");
    std::vector<int> v(n);
    for (auto& x : v) x = read_pod<int32_t>(is);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& data) {
    namespace fs = std::filesystem;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp + " for writing");
        detail::write_pod<uint32_t>(os, kCheckpointMagic);
        detail::write_pod<uint32_t>(os, kCheckpointVersion);
        detail::write_string(os, data.config_text);
        detail::write_doubles(os, data.betas);
        detail::write_ints(os, data.boundaries);
        detail::write_pod<int32_t>(os, data.base_h);
        detail::write_pod<int32_t>(os, data.base_w);

        const NetworkConfig& nc = data.net_config;
        detail::write_pod<int32_t>(os, nc.image_channels);
        detail::write_pod<int32_t>(os, nc.base_channels);
        detail::write_ints(os, nc.channel_multipliers);
        detail::write_pod<int32_t>(os, nc.blocks_per_level);
        detail::write_pod<int32_t>(os, nc.tlu_hidden_ratio);
        detail::write_pod<uint8_t>(os, nc.use_tlu ? 1 : 0);
        detail::write_ints(os, nc.attention_levels);
        detail::write_pod<uint8_t>(os, nc.time_in_resblock ? 1 : 0);

        const ChromaConfig& cc = data.chroma_config;
        detail::write_pod<int32_t>(os, cc.channels);
        detail::write_pod<int32_t>(os, cc.hidden);
        detail::write_pod<int32_t>(os, cc.reduction_ratio);
        detail::write_pod<int32_t>(os, cc.time_sin_dim);

        detail::write_pod<uint64_t>(os, data.rng_seed);
        detail::write_pod<uint64_t>(os, data.rng_position);
        detail::write_pod<int64_t>(os, data.iteration);
        detail::write_pod<int64_t>(os, data.adam_step);
        detail::write_pod<double>(os, data.learning_rate);

        detail::write_pod<uint64_t>(os, data.arrays.size());
        for (const auto& [name, tensor] : data.arrays) {
            detail::write_string(os, name);
            detail::write_ints(os, tensor.shape);
            detail::write_doubles(os, tensor.data);
        }
        os.flush();
        if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    uint32_t magic = detail::read_pod<uint32_t>(is);
    if (magic != kCheckpointMagic)
        throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
    CheckpointData data;
    data.version = detail::read_pod<uint32_t>(is);
    if (data.version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: format version " + std::to_string(data.version) +
                                 " not supported by loader version " +
                                 std::to_string(kCheckpointVersion));
    data.config_text = detail::read_string(is);
    data.betas = detail::read_doubles(is);
    data.boundaries = detail::read_ints(is);
    data.base_h = detail::read_pod<int32_t>(is);
    data.base_w = detail::read_pod<int32_t>(is);

    NetworkConfig& nc = data.net_config;
    nc.image_channels = detail::read_pod<int32_t>(is);
    nc.base_channels = detail::read_pod<int32_t>(is);
    nc.channel_multipliers = detail::read_ints(is);
    nc.blocks_per_level = detail::read_pod<int32_t>(is);
    nc.tlu_hidden_ratio = detail::read_pod<int32_t>(is);
    nc.use_tlu = detail::read_pod<uint8_t>(is) != 0;
    nc.attention_levels = detail::read_ints(is);
    nc.time_in_resblock = detail::read_pod<uint8_t>(is) != 0;

    ChromaConfig& cc = data.chroma_config;
    cc.channels = detail::read_pod<int32_t>(is);
    cc.hidden = detail::read_pod<int32_t>(is);
    cc.reduction_ratio = detail::read_pod<int32_t>(is);
    cc.time_sin_dim = detail::read_pod<int32_t>(is);

    data.rng_seed = detail::read_pod<uint64_t>(is);
    data.rng_position = detail::read_pod<uint64_t>(is);
    data.iteration = detail::read_pod<int64_t>(is);
    data.adam_step = detail::read_pod<int64_t>(is);
    data.learning_rate = detail::read_pod<double>(is);

    uint64_t count = detail::read_pod<uint64_t>(is);
    if (count > (1ull << 24)) throw std::runtime_error("checkpoint: corrupt array count");
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = detail::read_string(is);
        std::vector<int> shape = detail::read_ints(is);
        std::vector<double> values = detail::read_doubles(is);
        TensorT<double> t(shape);
        if (t.size() != static_cast<int64_t>(values.size()))
            throw std::runtime_error("checkpoint: array " + name + " size mismatch");
        t.data = std::move(values);
        data.arrays.emplace(std::move(name), std::move(t));
    }
    return data;
}

inline NoiseSchedule checkpoint_noise_schedule(const CheckpointData& data) {
    return noise_schedule_from_betas(data.betas);
}

inline ResolutionSchedule checkpoint_resolution_schedule(const CheckpointData& data) {
    return resolution_schedule_with_boundaries(static_cast<int>(data.betas.size()), data.base_h,
                                               data.base_w, data.boundaries);
}

template <typename Real>
CheckpointData make_checkpoint(const std::vector<nn::NamedParam<Real>>& params,
                               const nn::Adam<Real>& adam, const NoiseSchedule& ns,
                               const ResolutionSchedule& rs, const NetworkConfig& net_config,
                               const ChromaConfig& chroma_config, const std::string& config_text,
                               const NoiseStream& stream, int64_t iteration) {
    CheckpointData data;
    data.config_text = config_text;
    data.betas = ns.betas;
    data.boundaries = rs.boundaries;
    data.base_h = rs.base_h;
    data.base_w = rs.base_w;
    data.net_config = net_config;
    data.chroma_config = chroma_config;
    data.rng_seed = stream.seed();
    data.rng_position = stream.position();
    data.iteration = iteration;
    data.adam_step = adam.step_count();
    data.learning_rate = adam.learning_rate();
    for (const auto& np : params)
        data.arrays[np.name] = np.param->value.template cast<double>();
    for (const auto& [name, slot] : adam.state()) {
        data.arrays["adam.m." + name] = slot.m.template cast<double>();
        data.arrays["adam.v." + name] = slot.v.template cast<double>();
    }
    return data;
}

template <typename Real>
void restore_parameters(const CheckpointData& data,
                        const std::vector<nn::NamedParam<Real>>& params) {
    for (const auto& np : params) {
        auto it = data.arrays.find(np.name);
        if (it == data.arrays.end())
            throw std::runtime_error("checkpoint: missing parameter " + np.name);
        if (it->second.shape != np.param->value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + np.name);
        np.param->value = it->second.template cast<Real>();
    }
}

template <typename Real>
void restore_adam(const CheckpointData& data, nn::Adam<Real>& adam) {
    adam.set_step_count(data.adam_step);
    for (const auto& [name, tensor] : data.arrays) {
        if (name.rfind("adam.m.", 0) == 0)
            adam.state()[name.substr(7)].m = tensor.template cast<Real>();
        else if (name.rfind("adam.v.", 0) == 0)
            adam.state()[name.substr(7)].v = tensor.template cast<Real>();
    }
}

template <typename Real>
void restore_ema(const CheckpointData& data, std::map<std::string, TensorT<Real>>& shadow) {
    for (const auto& [name, tensor] : data.arrays)
        if (name.rfind("ema.", 0) == 0) shadow[name.substr(4)] = tensor.template cast<Real>();
}

}  // namespace lightdiff

#endif
