#ifndef LIGHTDIFF_SCHEDULE_HPP
#define LIGHTDIFF_SCHEDULE_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lightdiff {

/// Variance schedule of the diffusion chain: per-step beta_t in (0,1),
/// gamma_t = 1 - beta_t and the cumulative product gamma_hat_t.
/// Immutable after construction; safe for concurrent reads.
struct NoiseSchedule {
    int steps = 0;                    // T
    std::vector<double> betas;        // beta_1..beta_T
    std::vector<double> gammas;       // 1 - beta_t
    std::vector<double> gamma_hats;   // prod_{i<=t} gamma_i

    // 1-based step accessors
    double beta(int t) const { return betas.at(static_cast<size_t>(check_step(t) - 1)); }
    double gamma(int t) const { return gammas.at(static_cast<size_t>(check_step(t) - 1)); }

    /// gamma_hat_t with gamma_hat_0 == 1 (empty product).
    double gamma_hat_at(int t) const {
        if (t < 0 || t > steps)
            throw std::out_of_range("gamma_hat_at: step " + std::to_string(t) +
                                    " outside [0," + std::to_string(steps) + "]");
        return t == 0 ? 1.0 : gamma_hats[static_cast<size_t>(t - 1)];
    }

    int check_step(int t) const {
        if (t < 1 || t > steps)
            throw std::out_of_range("step " + std::to_string(t) + " outside [1," +
                                    std::to_string(steps) + "]");
        return t;
    }
};

/// Linear beta ramp from beta_start to beta_end inclusive.
inline NoiseSchedule build_noise_schedule(int steps, double beta_start = 1e-4,
                                          double beta_end = 0.02) {
    if (steps < 1) throw std::invalid_argument("build_noise_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument(
            "build_noise_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.betas.resize(static_cast<size_t>(steps));
    if (steps == 1) {
        s.betas[0] = beta_start;
    } else {
        for (int i = 0; i < steps; ++i)
            s.betas[static_cast<size_t>(i)] =
                beta_start + (beta_end - beta_start) * i / (steps - 1);
    }
    s.gammas.resize(s.betas.size());
    s.gamma_hats.resize(s.betas.size());
    double acc = 1.0;
    for (size_t i = 0; i < s.betas.size(); ++i) {
        s.gammas[i] = 1.0 - s.betas[i];
        acc *= s.gammas[i];
        s.gamma_hats[i] = acc;
    }
    return s;
}

/// Restores a schedule from an explicit beta list (checkpoint path).
inline NoiseSchedule noise_schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("noise schedule needs at least one beta");
    NoiseSchedule s;
    s.steps = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    s.gammas.resize(s.betas.size());
    s.gamma_hats.resize(s.betas.size());
    double acc = 1.0;
    for (size_t i = 0; i < s.betas.size(); ++i) {
        if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0))
            throw std::invalid_argument("beta outside (0,1) at step " + std::to_string(i + 1));
        s.gammas[i] = 1.0 - s.betas[i];
        acc *= s.gammas[i];
        s.gamma_hats[i] = acc;
    }
    return s;
}

/// Maps each forward step t to a spatial resolution r(t). The resolution
/// halves immediately after each boundary index, at most twice overall:
/// r(t) = base for t <= b0, base/2 for b0 < t <= b1, base/4 beyond.
struct ResolutionSchedule {
    int steps = 0;
    int base_h = 0, base_w = 0;
    std::vector<int> boundaries;  // ascending, size() <= 2

    std::pair<int, int> resolution_at(int t) const {
        if (t < 0 || t > steps)
            throw std::out_of_range("resolution_at: step " + std::to_string(t) +
                                    " outside [0," + std::to_string(steps) + "]");
        int k = reductions_at(t);
        return {base_h >> k, base_w >> k};
    }

    /// Number of halvings already applied at step t.
    int reductions_at(int t) const {
        int k = 0;
        for (int b : boundaries)
            if (t > b) ++k;
        return k;
    }

    int stage_count() const { return static_cast<int>(boundaries.size()) + 1; }
};

/// Validates the boundary list against the step count and divisibility of
/// the base dimensions (each halving must be exact).
inline ResolutionSchedule resolution_schedule_with_boundaries(int steps, int base_h, int base_w,
                                                              std::vector<int> boundaries) {
    if (steps < 1) throw std::invalid_argument("resolution schedule: T must be >= 1");
    if (boundaries.size() > 2)
        throw std::invalid_argument("resolution schedule: at most two reductions");
    int div = 1 << static_cast<int>(boundaries.size());
    if (base_h <= 0 || base_w <= 0 || base_h % div != 0 || base_w % div != 0)
        throw std::invalid_argument("resolution schedule: base dims " + std::to_string(base_h) +
                                    "x" + std::to_string(base_w) + " not divisible by " +
                                    std::to_string(div));
    int prev = 0;
    for (int b : boundaries) {
        if (b <= prev || b >= steps)
            throw std::invalid_argument("resolution schedule: boundaries must be ascending in (0,T)");
        prev = b;
    }
    ResolutionSchedule r;
    r.steps = steps;
    r.base_h = base_h;
    r.base_w = base_w;
    r.boundaries = std::move(boundaries);
    return r;
}

/// Default three-stage timeline: full resolution up to the quarter mark,
/// half resolution up to the midpoint, quarter resolution beyond.
inline ResolutionSchedule build_resolution_schedule(int steps, int base_h, int base_w) {
    if (steps < 4 || steps % 4 != 0)
        throw std::invalid_argument("build_resolution_schedule: T must be divisible by 4");
    if (base_h % 4 != 0 || base_w % 4 != 0)
        throw std::invalid_argument("build_resolution_schedule: base dims must be divisible by 4");
    return resolution_schedule_with_boundaries(steps, base_h, base_w, {steps / 4, steps / 2});
}

/// Constant-resolution schedule (plain DDPM timeline).
inline ResolutionSchedule constant_resolution_schedule(int steps, int base_h, int base_w) {
    return resolution_schedule_with_boundaries(steps, base_h, base_w, {});
}

}  // namespace lightdiff

#endif
