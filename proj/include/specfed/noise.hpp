#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "specfed/rng.hpp"
#include "specfed/waveform.hpp"

namespace specfed {

/// Noise variance that hits the requested SNR for a signal of the given
/// mean power: sigma^2 = P / 10^(snr_db/10).
inline double noise_variance_for_snr(double signal_power, double snr_db) {
    if (!(signal_power > 0.0)) throw std::invalid_argument("finite SNR requested on zero-power signal");
    return signal_power / std::pow(10.0, snr_db / 10.0);
}

/// Adds circularly-symmetric complex Gaussian noise calibrated so the
/// noise-free component sits snr_db above the noise. Returns the noisy
/// stream and the noise variance used.
inline std::pair<std::vector<std::complex<double>>, double> add_noise_at_snr(
    const std::vector<std::complex<double>>& signal, double snr_db, RandomStream& rng) {
    const double sigma2 = noise_variance_for_snr(mean_power(signal), snr_db);
    const double amp = std::sqrt(sigma2);
    std::vector<std::complex<double>> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] + amp * rng.cnormal();
    return {std::move(out), sigma2};
}

/// Adds noise of an explicitly chosen variance (used when the slot itself
/// carries no signal but the record still needs a realistic noise floor).
inline std::vector<std::complex<double>> add_noise_with_variance(
    const std::vector<std::complex<double>>& signal, double sigma2, RandomStream& rng) {
    const double amp = std::sqrt(sigma2);
    std::vector<std::complex<double>> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] + amp * rng.cnormal();
    return out;
}

/// Measured SNR in dB between a clean stream and its noisy counterpart.
inline double empirical_snr_db(const std::vector<std::complex<double>>& clean,
                               const std::vector<std::complex<double>>& noisy) {
    if (clean.size() != noisy.size() || clean.empty()) throw std::invalid_argument("stream length mismatch");
    double sig = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        sig += std::norm(clean[i]);
        noise += std::norm(noisy[i] - clean[i]);
    }
    if (noise <= 0.0) throw std::invalid_argument("no noise component present");
    return 10.0 * std::log10(sig / noise);
}

}  // namespace specfed
