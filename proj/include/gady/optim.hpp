#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gady/rng.hpp"
#include "gady/tape.hpp"
#include "gady/tensor.hpp"

namespace gady {

/// A named learnable tensor plus its optimizer moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor m;  // first moment
    Tensor v;  // second moment
};

/// Flat registry of parameters. Gradient vectors returned by loss builders
/// are aligned with this store's ordering.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor init) {
        params_.push_back(Param{std::move(name), std::move(init), Tensor{}, Tensor{}});
        Param& p = params_.back();
        p.m = Tensor::zeros(p.value.shape);
        p.v = Tensor::zeros(p.value.shape);
        return params_.size() - 1;
    }

    std::size_t size() const { return params_.size(); }
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

    /// Register every parameter as a gradient-carrying leaf on a tape.
    std::vector<Var> leaves(Tape& tape) const {
        std::vector<Var> out;
        out.reserve(params_.size());
        for (const Param& p : params_) out.push_back(tape.leaf(p.value, true));
        return out;
    }

    /// FNV-1a over value bit patterns; used to verify a store was untouched.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](std::uint64_t x) {
            for (int i = 0; i < 8; ++i) {
                h ^= (x >> (8 * i)) & 0xff;
                h *= 1099511628211ULL;
            }
        };
        for (const Param& p : params_) {
            for (double d : p.value.values) {
                std::uint64_t bits;
                static_assert(sizeof(bits) == sizeof(d));
                std::memcpy(&bits, &d, sizeof(bits));
                mix(bits);
            }
        }
        return h;
    }

private:
    std::vector<Param> params_;
};

/// Xavier-style uniform init, deterministic from the rng stream.
inline Tensor xavier_init(Rng& rng, std::size_t in, std::size_t out) {
    double a = std::sqrt(6.0 / static_cast<double>(in + out));
    return rng.sample_uniform(-a, a, {in, out});
}

/// Adaptive-moment gradient descent with bias correction.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, const std::vector<Tensor>& grads) {
        if (grads.size() != params.size()) throw error("adam: gradient count mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param& p = params[i];
            const Tensor& g = grads[i];
            if (!g.same_shape(p.value)) throw error("adam: gradient shape mismatch for " + p.name);
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                p.m[j] = beta1_ * p.m[j] + (1.0 - beta1_) * g[j];
                p.v[j] = beta2_ * p.v[j] + (1.0 - beta2_) * g[j] * g[j];
                double mhat = p.m[j] / bc1;
                double vhat = p.v[j] / bc2;
                p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::int64_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

}  // namespace gady
