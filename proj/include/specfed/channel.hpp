#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "specfed/rng.hpp"

namespace specfed {

struct ChannelTap {
    int delay = 0;  // integer samples
    std::complex<double> gain{1.0, 0.0};
};

/// Tapped-delay-line channel of one (station, UAV) link. Stands in for a
/// ray-traced path list: a finite set of delayed, complex-weighted copies.
struct MultipathChannel {
    std::vector<ChannelTap> taps;

    void validate() const {
        if (taps.empty()) throw std::invalid_argument("channel needs at least one tap");
        int prev = -1;
        for (const auto& t : taps) {
            if (t.delay < 0) throw std::invalid_argument("tap delay must be non-negative");
            if (t.delay <= prev) throw std::invalid_argument("tap delays must be strictly increasing");
            prev = t.delay;
        }
    }

    int max_delay() const {
        int d = 0;
        for (const auto& t : taps) d = std::max(d, t.delay);
        return d;
    }

    /// Sum of |gain|^2 over taps (average wideband power gain).
    double power_gain() const {
        double g = 0.0;
        for (const auto& t : taps) g += std::norm(t.gain);
        return g;
    }
};

/// Random tapped-delay profile: exponentially decaying magnitudes with
/// uniform phases, overall scale applied to every tap.
inline MultipathChannel make_random_channel(int num_taps, int delay_spread, double decay,
                                            double scale, RandomStream& rng) {
    if (num_taps < 1) throw std::invalid_argument("need at least one tap");
    MultipathChannel ch;
    ch.taps.reserve(static_cast<std::size_t>(num_taps));
    int delay = 0;
    double mag = 1.0;
    for (int i = 0; i < num_taps; ++i) {
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        ch.taps.push_back({delay, scale * mag * std::complex<double>(std::cos(phase), std::sin(phase))});
        const int gap = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, delay_spread))));
        delay += gap;
        mag *= decay;
    }
    return ch;
}

/// Noise-free received stream at one UAV: sum over stations of the tapped
/// delay convolution g_{k,b} * s_b. Output length covers the full response
/// (input length + max delay).
inline std::vector<std::complex<double>> propagate(
    std::span<const MultipathChannel> channels_per_station,
    std::span<const std::vector<std::complex<double>>> station_signals) {
    if (channels_per_station.size() != station_signals.size())
        throw std::invalid_argument("one channel per station signal required");
    if (station_signals.empty()) throw std::invalid_argument("no station signals");
    const std::size_t in_len = station_signals[0].size();
    int max_delay = 0;
    for (std::size_t b = 0; b < station_signals.size(); ++b) {
        if (station_signals[b].size() != in_len) throw std::invalid_argument("station signal length mismatch");
        channels_per_station[b].validate();
        max_delay = std::max(max_delay, channels_per_station[b].max_delay());
    }
    std::vector<std::complex<double>> out(in_len + static_cast<std::size_t>(max_delay), {0.0, 0.0});
    for (std::size_t b = 0; b < station_signals.size(); ++b) {
        const auto& sig = station_signals[b];
        for (const auto& tap : channels_per_station[b].taps) {
            const std::size_t d = static_cast<std::size_t>(tap.delay);
            for (std::size_t i = 0; i < in_len; ++i) out[i + d] += tap.gain * sig[i];
        }
    }
    return out;
}

}  // namespace specfed
