#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace semgrasp {

/// splitmix64 finalizer; used both as a bit mixer and to expand seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and stream labels.
/// Unlike plain XOR this keeps distinct label tuples from colliding.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = mix64(base);
    h = mix64(h ^ (a + 0x100000001b3ULL));
    h = mix64(h ^ (b + 0x100000001b5ULL));
    h = mix64(h ^ (c + 0x100000001c3ULL));
    return h;
}

/// Deterministic xoshiro256**-based generator. All sampling in the project
/// goes through this type so results do not depend on the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : state_) {
            x = mix64(x);
            w = x;
        }
        have_gauss_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_int(uint64_t n) {
        // Lemire rejection; unbiased and stable across platforms.
        uint64_t x = next_u64();
        __uint128_t m = __uint128_t(x) * n;
        uint64_t l = uint64_t(m);
        if (l < n) {
            uint64_t t = (0 - n) % n;
            while (l < t) {
                x = next_u64();
                m = __uint128_t(x) * n;
                l = uint64_t(m);
            }
        }
        return uint64_t(m >> 64);
    }

    /// Standard normal via Box-Muller (cached pair).
    double normal() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        gauss_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle with this generator (std::shuffle is not
    /// bit-stable across standard libraries).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = size_t(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Child generator for an independent labeled stream.
    Rng split(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        return Rng(derive_seed(state_[0] ^ state_[3], a, b, c));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4] = {};
    double gauss_ = 0.0;
    bool have_gauss_ = false;
};

}  // namespace semgrasp
