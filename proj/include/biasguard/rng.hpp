#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "biasguard/tensor.hpp"

namespace biasguard {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Seeded random stream. Normal variates come from an explicit Box-Muller
// transform so sequences are bit-stable across standard library versions.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(std::vector<std::size_t> shape, double sigma = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = sigma * normal();
        return t;
    }

    Tensor uniform_tensor(std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = uniform();
        return t;
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    // Independent child stream; distinct tags give uncorrelated sequences.
    RandomStream fork(std::uint64_t tag) const {
        return RandomStream(splitmix64(seed_ ^ splitmix64(tag ^ 0xA076BE5C0AD5EEDull)));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace biasguard
