// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dualflow {

// Deterministic random stream (xoshiro256++ seeded through splitmix64).
// Self-contained so the same seed gives the same values on every platform;
// std::normal_distribution is implementation-defined and is not used anywhere.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // i in [0, n)
    uint64_t index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream; forking with distinct tags never aliases the
    // parent sequence (used to partition streams per step / per clip).
    Rng fork(uint64_t tag) const {
        uint64_t x = state_[0] ^ rotl(state_[2], 29) ^ (tag * 0x9e3779b97f4a7c15ull);
        return Rng(splitmix64(x));
    }

    static uint64_t hash_string(std::string_view s) {
        uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
        return splitmix64(x);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static uint64_t splitmix64(uint64_t&& x) {
        uint64_t y = x;
        return splitmix64(y);
    }

    uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dualflow
