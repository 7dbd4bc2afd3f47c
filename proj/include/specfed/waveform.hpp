#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "specfed/fft.hpp"
#include "specfed/rng.hpp"

namespace specfed {

/// Partition of the cell bandwidth into M orthogonal subchannels, each
/// carrying n_sc OFDM subcarriers. One time slot synthesizes one symbol of
/// fft_size = M * n_sc samples.
struct SubchannelPlan {
    int num_subchannels = 16;   // M
    int subcarriers_per_subchannel = 4;  // n_sc
    double bandwidth_hz = 10e6;  // W
    int num_stations = 3;        // B
    int num_uavs = 3;            // K

    int fft_size() const { return num_subchannels * subcarriers_per_subchannel; }
    double subchannel_bandwidth_hz() const { return bandwidth_hz / num_subchannels; }

    void validate() const {
        if (num_subchannels < 1 || num_subchannels > 32)
            throw std::invalid_argument("subchannel count must be in [1,32]");
        if (subcarriers_per_subchannel < 1) throw std::invalid_argument("need >= 1 subcarrier per subchannel");
        if (bandwidth_hz <= 0.0) throw std::invalid_argument("bandwidth must be positive");
        if (num_stations < 1 || num_uavs < 1) throw std::invalid_argument("need >= 1 station and UAV");
    }
};

/// QPSK constellation point with unit magnitude.
inline std::complex<double> qpsk_symbol(RandomStream& rng) {
    constexpr double s = 0.70710678118654752440;
    const std::uint64_t bits = rng.next_u64();
    return {(bits & 1) ? s : -s, (bits & 2) ? s : -s};
}

/// Baseband slot waveform of one station: unit-power QPSK symbols on the
/// subcarriers of every occupied subchannel, inverse-transformed to time
/// domain. Subchannel m owns frequency bins [m*n_sc, (m+1)*n_sc); unoccupied
/// subchannels contribute exactly zero spectral energy. Scaled so each
/// occupied subchannel has unit mean time-domain power.
inline std::vector<std::complex<double>> synth_waveform(const SubchannelPlan& plan,
                                                        std::uint32_t occupancy_row,
                                                        RandomStream& rng) {
    plan.validate();
    const int n = plan.fft_size();
    const int n_sc = plan.subcarriers_per_subchannel;
    std::vector<std::complex<double>> freq(static_cast<std::size_t>(n), {0.0, 0.0});
    // magnitude N/sqrt(n_sc) per loaded bin => mean |x|^2 = 1 per occupied band
    const double amp = static_cast<double>(n) / std::sqrt(static_cast<double>(n_sc));
    for (int m = 0; m < plan.num_subchannels; ++m) {
        if (!((occupancy_row >> m) & 1u)) continue;
        for (int c = 0; c < n_sc; ++c) freq[static_cast<std::size_t>(m * n_sc + c)] = amp * qpsk_symbol(rng);
    }
    return ifft(std::move(freq));
}

/// Mean sample power of a complex stream.
inline double mean_power(const std::vector<std::complex<double>>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return acc / static_cast<double>(x.size());
}

/// Per-subchannel energies of a stream, measured on the plan's bin grid.
inline std::vector<double> subchannel_energies(const SubchannelPlan& plan,
                                               const std::vector<std::complex<double>>& x) {
    auto spectrum = fft(x);
    const int n_sc = plan.subcarriers_per_subchannel;
    const std::size_t n = spectrum.size();
    std::vector<double> energy(static_cast<std::size_t>(plan.num_subchannels), 0.0);
    for (int m = 0; m < plan.num_subchannels; ++m) {
        for (int c = 0; c < n_sc; ++c) {
            // map the plan's bin index onto the stream's grid proportionally
            const std::size_t bin = static_cast<std::size_t>(m * n_sc + c) * n / static_cast<std::size_t>(plan.fft_size());
            energy[static_cast<std::size_t>(m)] += std::norm(spectrum[bin]);
        }
    }
    return energy;
}

}  // namespace specfed
