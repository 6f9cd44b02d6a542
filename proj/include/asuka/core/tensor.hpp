#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "asuka/core/rng.hpp"

namespace asuka::core {

// Dense row-major double tensor. All model math runs in f64 so the
// finite-difference and bit-equivalence tests are meaningful.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s, double fill = 0.0)
        : shape(std::move(s)), data(std::size_t(numel_of(shape)), fill) {}

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dim");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return std::int64_t(data.size()); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    double& at(std::int64_t i) { return data[std::size_t(i)]; }
    double at(std::int64_t i) const { return data[std::size_t(i)]; }
    double& at2(std::int64_t r, std::int64_t c) { return data[std::size_t(r * shape[1] + c)]; }
    double at2(std::int64_t r, std::int64_t c) const { return data[std::size_t(r * shape[1] + c)]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(std::vector<std::int64_t> s, double v) { return Tensor(std::move(s), v); }

    static Tensor randn(std::vector<std::int64_t> s, RngStream& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.normal() * stddev;
        return t;
    }

    static Tensor uniform(std::vector<std::int64_t> s, RngStream& rng, double lo, double hi) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.uniform(lo, hi);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::abs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace asuka::core
