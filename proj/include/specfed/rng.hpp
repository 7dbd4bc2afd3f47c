#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace specfed {

/// Stateless 64-bit finalizer (splitmix64). Full avalanche, used both as the
/// generator step and to derive independent child streams from a parent key.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives a child stream key from (parent, index). Seeds produced this way
/// are schedule-independent: worker i always sees the same stream no matter
/// how work is distributed across threads.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return mix64(mix64(parent ^ 0xd1b54a32d192ed03ull) ^ mix64(index ^ 0x8cb92ba72f3d8dd7ull));
}

/// Named sub-stream domains so independent parts of a run never share a
/// stream even when they share a slot/client index.
enum class StreamDomain : std::uint64_t {
    Occupancy = 1,
    Waveform = 2,
    ChannelTaps = 3,
    Noise = 4,
    ModelInit = 5,
    Shuffle = 6,
    Batch = 7,
    GradientNoise = 8,
    Policy = 9,
    EnvInit = 10,
    Replay = 11,
};

inline std::uint64_t derive_seed(std::uint64_t parent, StreamDomain d, std::uint64_t index = 0) {
    return derive_seed(derive_seed(parent, static_cast<std::uint64_t>(d)), index);
}

/// Small deterministic PRNG (splitmix64 core). Not for cryptography. We do
/// not use <random> distributions because their output is implementation
/// defined; reproducibility of generated artifacts requires our own mapping
/// from bits to variates.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : state_(seed) {}

    static RandomStream child(std::uint64_t parent, StreamDomain d, std::uint64_t index = 0) {
        return RandomStream(derive_seed(parent, d, index));
    }

    std::uint64_t next_u64() { return mix64(state_++); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection sampling keeps the draw exactly uniform
        const std::uint64_t limit = n * ((~0ull) / n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; second variate cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    /// Circularly-symmetric complex normal with E|z|^2 = 1.
    std::complex<double> cnormal() {
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        const double re = normal();
        const double im = normal();
        return {re * inv_sqrt2, im * inv_sqrt2};
    }

    /// Fisher-Yates shuffle with this stream (std::shuffle is not portable
    /// across standard library implementations).
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace specfed
