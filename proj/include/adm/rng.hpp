#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace adm {

/// Portable seeded generator: xoshiro256** seeded through SplitMix64.
///
/// The exact algorithm is part of the repository contract so that datasets,
/// episode sequences and reports reproduce across implementations:
///   - state: four 64-bit words produced by consecutive SplitMix64 outputs
///     starting from the 64-bit seed
///   - stream(seed, index): the effective seed of stream `index` is
///     splitmix64_mix(seed + (index + 1) * 0x9E3779B97F4A7C15)
///   - next_double(): (next_u64() >> 11) * 2^-53, uniform in [0, 1)
///   - next_below(n): rejection-sampled unbiased integer in [0, n)
///   - next_normal(): Box-Muller on two uniforms, second value cached
///   - shuffle: Fisher-Yates driven by next_below, from the back
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64_next(s);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    /// Statistically independent stream for (seed, index); identical inputs
    /// give identical streams regardless of how many other streams exist.
    static Rng stream(uint64_t seed, uint64_t index) {
        return Rng(splitmix64_mix(seed + (index + 1) * UINT64_C(0x9E3779B97F4A7C15)));
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

    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, bound); bound must be >= 1.
    uint64_t next_below(uint64_t bound) {
        const uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const uint64_t x = next_u64();
            if (x >= threshold) return x % bound;
        }
    }

    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(angle);
        has_cached_ = true;
        return r * std::cos(angle);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// First k elements of a Fisher-Yates pass over [0, n): a draw of k
    /// distinct indices, order-sensitive and deterministic.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(next_below(static_cast<uint64_t>(n - i)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64_next(uint64_t& s) {
        s += UINT64_C(0x9E3779B97F4A7C15);
        return splitmix64_mix(s);
    }

    static uint64_t splitmix64_mix(uint64_t z) {
        z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
        return z ^ (z >> 31);
    }

    std::array<uint64_t, 4> state_{};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace adm
