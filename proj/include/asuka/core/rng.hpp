#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace asuka::core {

// Deterministic RNG used everywhere instead of <random> distributions, which
// are implementation-defined and would break frozen fixtures across stdlibs.
// Generator: xoshiro256** seeded via splitmix64.
//
// Worker split rule: child stream i of a root seed is
//   seed_i = splitmix64(root ^ splitmix64(0x9E3779B97F4A7C15 * (i + 1)))
// so independent workers never share a stream.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        seed_ = seed;
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x = splitmix64(x);
            s = x;
        }
        has_spare_normal_ = false;
        spare_normal_ = 0.0;
    }

    std::uint64_t seed() const { return seed_; }

    RngStream split(std::uint64_t worker_index) const {
        std::uint64_t h = splitmix64(0x9E3779B97F4A7C15ULL * (worker_index + 1));
        return RngStream(splitmix64(seed_ ^ h));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive. Unbiased rejection sampling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = std::uint64_t(hi - lo) + 1;
        if (span == 0) return std::int64_t(next_u64());  // full 64-bit range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return lo + std::int64_t(r % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (pair cached).
    double normal() {
        if (has_spare_normal_) {
            has_spare_normal_ = false;
            return spare_normal_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_normal_ = r * std::sin(theta);
        has_spare_normal_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = std::size_t(uniform_int(0, std::int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_ = 0;
    std::uint64_t state_[4] = {0, 0, 0, 0};
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

}  // namespace asuka::core
