#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace camf {

// splitmix64 finalizer; used to derive independent seeds (per fold, per epoch, ...)
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG used wherever a seed appears. Distributions are hand-rolled
// on top of mt19937_64 so streams are stable across stdlib versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0,1)
        return std::ldexp(static_cast<double>(engine_() >> 11), -53);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {  // standard normal, Box-Muller
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * uniform());
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    size_t index(size_t n) { return static_cast<size_t>(engine_() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace camf
