#pragma once

#include <bit>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace specfed {

namespace detail {

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline std::vector<std::complex<double>> dft_direct(const std::vector<std::complex<double>>& x,
                                                    bool inverse) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    const double sign = inverse ? 2.0 : -2.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace detail

/// Unnormalized forward DFT. Radix-2 in place when the length is a power of
/// two, direct O(n^2) otherwise (lengths here are small).
inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x) {
    if (x.empty()) return x;
    if (std::has_single_bit(x.size())) {
        detail::fft_radix2(x, false);
        return x;
    }
    return detail::dft_direct(x, false);
}

/// Inverse DFT with 1/N normalization, so ifft(fft(x)) == x.
inline std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x) {
    if (x.empty()) return x;
    if (std::has_single_bit(x.size())) {
        detail::fft_radix2(x, true);
    } else {
        x = detail::dft_direct(x, true);
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= inv_n;
    return x;
}

}  // namespace specfed
