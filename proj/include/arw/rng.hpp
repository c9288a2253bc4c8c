// Seedable, splittable random number generation for reproducible trials.
//
// The generator is xoshiro256++ (Blackman & Vigna), seeded through
// splitmix64 so that nearby seeds produce unrelated streams. Trial streams
// are derived from (master_seed, entry, trial), which keeps parallel runs
// bit-reproducible regardless of scheduling.
#pragma once

#include <cstdint>
#include <limits>

namespace arw {

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += kSplitMixGamma);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Xoshiro256pp {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256pp(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

    result_type operator()() { return next(); }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Unbiased integer in [0, bound) via Lemire's multiply-with-rejection.
    std::uint64_t uniform_below(std::uint64_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double prob) { return uniform01() < prob; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Deterministic per-trial seed: independent of worker count and run order.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                        std::uint64_t entry_index,
                                        std::uint64_t trial_index) {
    std::uint64_t state = master_seed;
    std::uint64_t h = splitmix64(state);
    state = h ^ (entry_index * 0xD6E8FEB86659FD93ULL);
    h = splitmix64(state);
    state = h ^ (trial_index * 0xCA5A826395121157ULL);
    return splitmix64(state);
}

}  // namespace arw
