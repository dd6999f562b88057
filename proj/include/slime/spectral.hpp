#pragma once

// Real-input transforms along the sequence dimension, differentiable through
// the tape. A [N x d] tensor maps to a half-spectrum of M = floor(N/2)+1
// complex bins per feature column, stored as split real/imaginary planes.

#include <complex>
#include <cstddef>
#include <vector>

#include "slime/errors.hpp"
#include "slime/fft.hpp"
#include "slime/tensor.hpp"

namespace slime {

inline std::size_t half_spectrum_bins(std::size_t n) { return n / 2 + 1; }

struct Spectrum {
    ComplexTensor bins;         // [M x d]
    std::size_t origin_length;  // N

    std::size_t num_bins() const { return bins.shape()[0]; }
    std::size_t num_features() const { return bins.shape()[1]; }
};

namespace spectral_detail {

// Adjoint of the half-spectrum forward map applied to plane gradients:
// dx_n = sum_{k<M} gr_k cos(2pi nk/N) - gi_k sin(2pi nk/N)
//      = Re( unscaled-IDFT of [gr + i gi, zero-extended to N] )_n.
inline void rfft_adjoint_column(const std::vector<double>& gr, const std::vector<double>& gi,
                                std::size_t n, std::vector<double>& dx) {
    std::vector<fft::cd> g(n, fft::cd(0, 0));
    for (std::size_t k = 0; k < gr.size(); ++k) g[k] = fft::cd(gr[k], gi[k]);
    auto t = fft::ifft_unscaled(std::move(g));
    dx.resize(n);
    for (std::size_t i = 0; i < n; ++i) dx[i] = t[i].real();
}

// Full spectrum rebuilt from the half-spectrum under conjugate symmetry.
// DC (and Nyquist, even N) imaginary parts are ignored, matching the
// convention that those bins are real for real signals.
inline std::vector<fft::cd> unfold_half_spectrum(const std::vector<double>& re,
                                                 const std::vector<double>& im, std::size_t n) {
    const std::size_t m = half_spectrum_bins(n);
    std::vector<fft::cd> full(n);
    full[0] = fft::cd(re[0], 0.0);
    const bool even = (n % 2 == 0);
    const std::size_t last_mirrored = even ? m - 2 : m - 1;
    for (std::size_t k = 1; k <= last_mirrored && k < m; ++k) {
        full[k] = fft::cd(re[k], im[k]);
        full[n - k] = std::conj(full[k]);
    }
    if (even && n >= 2) full[m - 1] = fft::cd(re[m - 1], 0.0);
    return full;
}

}  // namespace spectral_detail

// Forward real FFT of each feature column; returns the non-redundant
// half-spectrum (unnormalized, matching X_k = sum x_n W^{nk}).
inline Spectrum rfft(const TensorPtr& x) {
    if (x->shape.size() != 2) throw DimensionError("rfft expects [N x d]");
    const std::size_t n = x->shape[0], d = x->shape[1];
    if (n < 1) throw DimensionError("rfft of empty sequence");
    const std::size_t m = half_spectrum_bins(n);
    std::vector<double> re(m * d), im(m * d);
    std::vector<fft::cd> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = fft::cd(x->data[i * d + j], 0.0);
        auto spec = fft::fft(col);
        for (std::size_t k = 0; k < m; ++k) {
            re[k * d + j] = spec[k].real();
            im[k * d + j] = spec[k].imag();
        }
    }
    auto re_t = make_tensor({m, d}, std::move(re));
    auto im_t = make_tensor({m, d}, std::move(im));
    if (detail::tracing({x})) {
        detail::mark_output(re_t);
        detail::mark_output(im_t);
        Tape::active()->record([x, re_t, im_t, n, d, m]() {
            if (re_t->grad.empty() && im_t->grad.empty()) return;
            if (!x->requires_grad) return;
            x->ensure_grad();
            std::vector<double> gr(m), gi(m), dx;
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t k = 0; k < m; ++k) {
                    gr[k] = re_t->grad.empty() ? 0.0 : re_t->grad[k * d + j];
                    gi[k] = im_t->grad.empty() ? 0.0 : im_t->grad[k * d + j];
                }
                spectral_detail::rfft_adjoint_column(gr, gi, n, dx);
                for (std::size_t i = 0; i < n; ++i) x->grad[i * d + j] += dx[i];
            }
        });
    }
    return Spectrum{ComplexTensor(re_t, im_t), n};
}

// Inverse of rfft: rebuilds the full conjugate-symmetric spectrum, applies the
// 1/N-normalized inverse transform, and keeps the real part.
inline TensorPtr irfft(const Spectrum& spec, std::size_t n) {
    if (spec.origin_length != n)
        throw ContractError("irfft length " + std::to_string(n) +
                            " inconsistent with spectrum origin length " +
                            std::to_string(spec.origin_length));
    if (spec.num_bins() != half_spectrum_bins(n))
        throw ContractError("irfft bin count " + std::to_string(spec.num_bins()) +
                            " inconsistent with length " + std::to_string(n));
    const std::size_t m = spec.num_bins(), d = spec.num_features();
    const auto& re_t = spec.bins.real;
    const auto& im_t = spec.bins.imag;
    std::vector<double> out(n * d);
    std::vector<double> cre(m), cim(m);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
            cre[k] = re_t->data[k * d + j];
            cim[k] = im_t->data[k * d + j];
        }
        auto full = spectral_detail::unfold_half_spectrum(cre, cim, n);
        auto t = fft::ifft(std::move(full));
        for (std::size_t i = 0; i < n; ++i) out[i * d + j] = t[i].real();
    }
    auto res = make_tensor({n, d}, std::move(out));
    if (detail::tracing({re_t, im_t})) {
        detail::mark_output(res);
        const bool even = (n % 2 == 0);
        Tape::active()->record([re_t, im_t, res, n, d, m, even]() {
            if (res->grad.empty()) return;
            std::vector<fft::cd> g(n);
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t i = 0; i < n; ++i)
                    g[i] = fft::cd(res->grad[i * d + j], 0.0);
                auto spec_g = fft::fft(g);
                for (std::size_t k = 0; k < m; ++k) {
                    const bool endpoint = (k == 0) || (even && k == m - 1);
                    double w = endpoint ? 1.0 : 2.0;
                    if (re_t->requires_grad) {
                        re_t->ensure_grad();
                        re_t->grad[k * d + j] += (w / static_cast<double>(n)) * spec_g[k].real();
                    }
                    if (im_t->requires_grad && !endpoint) {
                        im_t->ensure_grad();
                        im_t->grad[k * d + j] += (2.0 / static_cast<double>(n)) * spec_g[k].imag();
                    }
                }
            }
        });
    }
    return res;
}

}  // namespace slime
