#pragma once

// Complex FFT kernels: iterative radix-2 for power-of-two lengths, Bluestein's
// chirp-z fallback for everything else. Plus the O(N^2) direct DFT used as a
// correctness oracle.

#include <complex>
#include <cstddef>
#include <vector>

#include "slime/errors.hpp"

namespace slime::fft {

using cd = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

inline void fft_radix2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    // bit reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cd wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                cd u = a[i + j];
                cd v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Bluestein: X_k = conj(w_k) * sum_n (x_n conj(w_n)) w_{k-n}, w_m = e^{i pi m^2 / N},
// evaluated as one padded power-of-two circular convolution.
inline std::vector<cd> fft_bluestein(const std::vector<cd>& x, bool inverse) {
    const std::size_t n = x.size();
    const double pi = 3.14159265358979323846;
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cd> w(n);
    for (std::size_t m = 0; m < n; ++m) {
        // m^2 mod 2n keeps the chirp argument small
        std::size_t m2 = (m * m) % (2 * n);
        double ang = sign * pi * static_cast<double>(m2) / static_cast<double>(n);
        w[m] = cd(std::cos(ang), std::sin(ang));
    }
    std::size_t m = next_power_of_two(2 * n - 1);
    std::vector<cd> a(m, cd(0, 0)), b(m, cd(0, 0));
    for (std::size_t i = 0; i < n; ++i) a[i] = x[i] * w[i];
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = std::conj(w[i]);
        if (i) b[m - i] = std::conj(w[i]);
    }
    fft_radix2(a, false);
    fft_radix2(b, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_radix2(a, true);
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = w[k] * (a[k] / static_cast<double>(m));
    return out;
}

}  // namespace detail

// Unnormalized forward transform: X_k = sum_n x_n e^{-2pi i nk / N}.
inline std::vector<cd> fft(std::vector<cd> x) {
    if (x.empty()) throw DimensionError("fft of empty sequence");
    if (x.size() == 1) return x;
    if (is_power_of_two(x.size())) {
        detail::fft_radix2(x, false);
        return x;
    }
    return detail::fft_bluestein(x, false);
}

// Unnormalized inverse kernel: sum_k X_k e^{+2pi i nk / N} (no 1/N).
inline std::vector<cd> ifft_unscaled(std::vector<cd> x) {
    if (x.empty()) throw DimensionError("ifft of empty sequence");
    if (x.size() == 1) return x;
    if (is_power_of_two(x.size())) {
        detail::fft_radix2(x, true);
        return x;
    }
    return detail::fft_bluestein(x, true);
}

// Inverse transform with the 1/N normalization.
inline std::vector<cd> ifft(std::vector<cd> x) {
    const double inv_n = 1.0 / static_cast<double>(x.size());
    auto out = ifft_unscaled(std::move(x));
    for (auto& v : out) v *= inv_n;
    return out;
}

// Direct O(N^2) DFT; the oracle for the fast paths.
inline std::vector<cd> naive_dft(const std::vector<cd>& x) {
    const std::size_t n = x.size();
    const double pi = 3.14159265358979323846;
    std::vector<cd> out(n, cd(0, 0));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t m = 0; m < n; ++m) {
            double ang = -2.0 * pi * static_cast<double>(k * m) / static_cast<double>(n);
            out[k] += x[m] * cd(std::cos(ang), std::sin(ang));
        }
    return out;
}

inline std::vector<cd> naive_dft(const std::vector<double>& x) {
    std::vector<cd> cx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) cx[i] = cd(x[i], 0.0);
    return naive_dft(cx);
}

// Direct O(N^2) periodic convolution; the convolution-theorem oracle.
inline std::vector<double> circular_convolve(const std::vector<double>& f,
                                             const std::vector<double>& x) {
    if (f.size() != x.size())
        throw DimensionError("circular_convolve length mismatch: " + std::to_string(f.size()) +
                             " vs " + std::to_string(x.size()));
    const std::size_t n = f.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t m = 0; m < n; ++m) out[i] += f[m] * x[(i + n - m) % n];
    return out;
}

}  // namespace slime::fft
