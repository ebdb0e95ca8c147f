#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tcvads {

// Deterministic RNG. mt19937_64 has a standardized bit stream, and the
// uniform/normal transforms below are our own, so sequences are identical
// across platforms and standard libraries for a given seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform index in [0, n).
    size_t index(size_t n) {
        // Rejection sampling keeps the distribution exact for any n.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<size_t>(x % n);
    }

    // Fisher-Yates shuffle, deterministic for a given seed.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// SplitMix64 step; used to derive stable sub-seeds and token hashes.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable 64-bit hash of a byte string mixed with a seed.
inline uint64_t hash_string(const std::string& s, uint64_t seed) {
    uint64_t h = splitmix64(seed ^ 0x51ed2701a2b9e4d3ULL);
    for (unsigned char c : s) h = splitmix64(h ^ c);
    return h;
}

}  // namespace tcvads
