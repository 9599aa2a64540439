#ifndef LIGHTDIFF_RNG_HPP
#define LIGHTDIFF_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace lightdiff {

inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Counter-based random stream. Every draw call consumes exactly one
/// position tick and is a pure function of (seed, position), so a stream
/// restored from a serialized (seed, position) pair continues bit-exactly
/// and substreams can be derived without sharing state.
class NoiseStream {
public:
    explicit NoiseStream(uint64_t seed, uint64_t position = 0)
        : seed_(seed), position_(position) {}

    uint64_t seed() const { return seed_; }
    uint64_t position() const { return position_; }
    void seek(uint64_t position) { position_ = position; }

    /// Independent stream for e.g. the i-th image of a dataset build.
    NoiseStream substream(uint64_t index) const {
        uint64_t s = seed_ ^ (0x7e46b3c452a93f1dull + index * 0x9e3779b97f4a7c15ull);
        splitmix64_next(s);
        return NoiseStream(s);
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        uint64_t st = tick();
        double u = to_unit(splitmix64_next(st));
        return lo + (hi - lo) * u;
    }

    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t st = tick();
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(splitmix64_next(st) % span);
    }

    /// One standard-normal scalar.
    double normal() {
        uint64_t st = tick();
        return box_muller(st).first;
    }

    /// Fills `out` with i.i.d. standard normals (Box-Muller pairs).
    template <typename Real>
    void fill_normal(std::vector<Real>& out) {
        uint64_t st = tick();
        size_t i = 0;
        while (i < out.size()) {
            auto [z0, z1] = box_muller(st);
            out[i++] = static_cast<Real>(z0);
            if (i < out.size()) out[i++] = static_cast<Real>(z1);
        }
    }

    template <typename Real>
    void fill_uniform(std::vector<Real>& out, double lo, double hi) {
        uint64_t st = tick();
        for (auto& v : out)
            v = static_cast<Real>(lo + (hi - lo) * to_unit(splitmix64_next(st)));
    }

private:
    uint64_t tick() {
        // fold (seed, position) into a fresh generator state
        uint64_t st = seed_;
        splitmix64_next(st);
        st ^= 0xd1b54a32d192ed03ull * (position_ + 1);
        splitmix64_next(st);
        ++position_;
        return st;
    }

    static double to_unit(uint64_t x) {
        return static_cast<double>(x >> 11) * 0x1.0p-53;  // [0,1)
    }

    static std::pair<double, double> box_muller(uint64_t& st) {
        double u1 = to_unit(splitmix64_next(st));
        double u2 = to_unit(splitmix64_next(st));
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    uint64_t seed_;
    uint64_t position_;
};

}  // namespace lightdiff

#endif
