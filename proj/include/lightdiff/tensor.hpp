#ifndef LIGHTDIFF_TENSOR_HPP
#define LIGHTDIFF_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightdiff/rng.hpp"

namespace lightdiff {

/// Dense row-major tensor. Images are (channels, height, width); vectors
/// are rank-1. Value semantics throughout: copies are deep.
template <typename Real>
struct TensorT {
    std::vector<int> shape;
    std::vector<Real> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), data(numel(shape), Real(0)) {}
    TensorT(std::vector<int> s, Real fill) : shape(std::move(s)), data(numel(shape), fill) {}

    static int64_t numel(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    // (C,H,W) accessors
    int channels() const { return shape.at(0); }
    int height() const { return shape.at(1); }
    int width() const { return shape.at(2); }
    Real& at(int c, int y, int x) {
        return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
    }
    Real at(int c, int y, int x) const {
        return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
    }

    Real& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    Real operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    TensorT& operator+=(const TensorT& o) {
        check_same(o);
        for (int64_t i = 0; i < size(); ++i) data[i] += o.data[i];
        return *this;
    }
    TensorT& operator-=(const TensorT& o) {
        check_same(o);
        for (int64_t i = 0; i < size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    TensorT& operator*=(Real s) {
        for (auto& v : data) v *= s;
        return *this;
    }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(Real(0)); }

    void clamp(Real lo, Real hi) {
        for (auto& v : data) v = v < lo ? lo : (v > hi ? hi : v);
    }

    bool all_finite() const {
        for (auto v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Real max_abs() const {
        Real m = 0;
        for (auto v : data) m = std::max(m, std::abs(v));
        return m;
    }

    double sum() const {
        double s = 0;
        for (auto v : data) s += static_cast<double>(v);
        return s;
    }
    double mean() const { return size() ? sum() / static_cast<double>(size()) : 0.0; }

    template <typename Other>
    TensorT<Other> cast() const {
        TensorT<Other> out(shape);
        for (int64_t i = 0; i < size(); ++i) out.data[i] = static_cast<Other>(data[i]);
        return out;
    }

    void check_same(const TensorT& o) const {
        if (!same_shape(o)) throw std::invalid_argument("tensor shape mismatch");
    }
};

template <typename Real>
TensorT<Real> operator+(TensorT<Real> a, const TensorT<Real>& b) { return a += b; }
template <typename Real>
TensorT<Real> operator-(TensorT<Real> a, const TensorT<Real>& b) { return a -= b; }
template <typename Real>
TensorT<Real> operator*(TensorT<Real> a, Real s) { return a *= s; }

template <typename Real>
TensorT<Real> normal_like(const std::vector<int>& shape, NoiseStream& stream) {
    TensorT<Real> out(shape);
    stream.fill_normal(out.data);
    return out;
}

/// Channelwise concatenation of two (C,H,W) images.
template <typename Real>
TensorT<Real> concat_channels(const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.height() != b.height() || a.width() != b.width())
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
    TensorT<Real> out({a.channels() + b.channels(), a.height(), a.width()});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
    return out;
}

/// First `c` channels of a (C,H,W) tensor.
template <typename Real>
TensorT<Real> take_channels(const TensorT<Real>& x, int begin, int count) {
    TensorT<Real> out({count, x.height(), x.width()});
    int64_t plane = static_cast<int64_t>(x.height()) * x.width();
    std::copy(x.data.begin() + begin * plane, x.data.begin() + (begin + count) * plane,
              out.data.begin());
    return out;
}

inline std::string shape_string(const std::vector<int>& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + ")";
}

}  // namespace lightdiff

#endif
