#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "gady/tensor.hpp"

namespace gady {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based xoshiro256** generator. All derived draws (uniform doubles,
/// gaussians via Box-Muller, bounded ints via rejection) are computed from
/// integer bit operations and libm, so a seed reproduces the same sequence
/// on any platform with the same build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = detail::splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0,1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller. Two u64 draws per call, no cached spare.
    double gaussian() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;  // (0,1)
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Unbiased integer in [0,n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Derive an independent stream; the parent state is untouched.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t x = s_[0] ^ (s_[3] + 0x632be59bd9b4e019ULL * (stream + 1));
        Rng r(0);
        for (auto& w : r.s_) w = detail::splitmix64(x);
        return r;
    }

    Tensor sample_gaussian(std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.values) v = gaussian();
        return t;
    }

    Tensor sample_uniform(double lo, double hi, std::vector<std::size_t> shape) {
        if (!(lo < hi)) throw error("sample_uniform: lo must be < hi");
        Tensor t(std::move(shape));
        for (auto& v : t.values) v = uniform(lo, hi);
        return t;
    }

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> s_{};
};

}  // namespace gady
