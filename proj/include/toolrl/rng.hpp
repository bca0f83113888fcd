#pragma once

// Deterministic random number generation. The standard <random> distributions
// are implementation-defined, so every draw here is built directly on the
// engine bits to keep outputs byte-stable across compilers and reruns.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace toolrl {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Mixes an arbitrary list of values into a child seed. Used to carve
// independent streams out of one run seed (per question, per rollout, ...).
inline std::uint64_t derive_seed(std::uint64_t base) {
    std::uint64_t s = base;
    return splitmix64_next(s);
}

template <typename... Rest>
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t v, Rest... rest) {
    std::uint64_t s = base ^ (v + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
    return derive_seed(splitmix64_next(s), rest...);
}

inline std::uint64_t hash_string(std::string_view text) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// xoshiro256** engine seeded via splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64_next(s);
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

    // Uniform double in [0, 1), 53 bits of entropy.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); n must be positive.
    int uniform_int(int n) { return static_cast<int>(uniform01() * static_cast<double>(n)); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace toolrl
