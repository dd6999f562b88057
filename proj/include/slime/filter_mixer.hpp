#pragma once

// Sliding learnable frequency filters: per-layer dynamic windows that ramp
// across the half-spectrum, a static even partition that guarantees full
// coverage, and their convex mixture.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "slime/errors.hpp"
#include "slime/spectral.hpp"
#include "slime/tensor.hpp"

namespace slime {

struct FilterWindow {
    std::size_t layer = 0;
    std::size_t start = 0;  // inclusive bin index
    std::size_t end = 0;    // exclusive bin index

    std::size_t width() const { return end - start; }
    bool contains(std::size_t bin) const { return bin >= start && bin < end; }
};

// Slide modes: direction of the dynamic / static window ramp across layers.
// 1: dynamic high->low, static low->high
// 2: dynamic low->high, static high->low
// 3: both low->high
// 4: both high->low (default; windows start at the top of the spectrum)
struct RampSchedule {
    std::vector<FilterWindow> dfs_windows;
    std::vector<FilterWindow> sfs_windows;
    double alpha = 1.0;
    double beta = 1.0;  // always 1/L
    int mode = 4;
    std::size_t num_bins = 0;

    std::size_t num_layers() const { return dfs_windows.size(); }
};

namespace ramp_detail {

inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

inline void relabel_layers(std::vector<FilterWindow>& windows) {
    for (std::size_t l = 0; l < windows.size(); ++l) windows[l].layer = l;
}

}  // namespace ramp_detail

inline RampSchedule build_ramp_schedule(std::size_t num_bins, std::size_t num_layers, double alpha,
                                        int mode) {
    if (num_layers < 1) throw ConfigError("ramp schedule needs at least one layer");
    if (alpha <= 0.0 || alpha > 1.0)
        throw ConfigError("alpha must lie in (0, 1], got " + std::to_string(alpha));
    if (num_bins < num_layers)
        throw ConfigError("need at least as many frequency bins (" + std::to_string(num_bins) +
                          ") as layers (" + std::to_string(num_layers) + ")");
    if (mode < 1 || mode > 4) throw ConfigError("slide mode must be 1..4");

    const std::size_t m = num_bins;
    const std::size_t l_count = num_layers;

    RampSchedule sched;
    sched.alpha = alpha;
    sched.beta = 1.0 / static_cast<double>(l_count);
    sched.mode = mode;
    sched.num_bins = m;

    // Dynamic windows, high-to-low base direction. Width round(alpha*M),
    // window ends descend by the fractional step (1-alpha)*M/(L-1).
    const std::size_t width = std::max<std::size_t>(1, ramp_detail::round_half_up(alpha * m));
    const double step =
        (l_count > 1) ? (1.0 - alpha) * static_cast<double>(m) / static_cast<double>(l_count - 1)
                      : 0.0;
    for (std::size_t l = 0; l < l_count; ++l) {
        std::size_t offset = ramp_detail::round_half_up(static_cast<double>(l) * step);
        std::size_t end = (offset >= m) ? 1 : std::max<std::size_t>(1, m - offset);
        std::size_t start = (end > width) ? end - width : 0;
        sched.dfs_windows.push_back({l, start, end});
    }

    // Static windows: cumulative boundaries so the L blocks exactly partition
    // [0, M) regardless of rounding remainders.
    std::vector<std::size_t> bounds(l_count + 1);
    for (std::size_t l = 0; l <= l_count; ++l) {
        std::size_t drop = static_cast<std::size_t>(
            std::floor(static_cast<double>(l * m) / static_cast<double>(l_count)));
        bounds[l] = m - drop;
    }
    for (std::size_t l = 0; l < l_count; ++l)
        sched.sfs_windows.push_back({l, bounds[l + 1], bounds[l]});

    // Other modes reverse the layer order of one or both ramps.
    if (mode == 1 || mode == 3) std::reverse(sched.sfs_windows.begin(), sched.sfs_windows.end());
    if (mode == 2 || mode == 3) std::reverse(sched.dfs_windows.begin(), sched.dfs_windows.end());
    ramp_detail::relabel_layers(sched.dfs_windows);
    ramp_detail::relabel_layers(sched.sfs_windows);
    return sched;
}

// ---------------------------------------------------------------------------

// Bins inside [start, end) pass through the complex filter; everything else is
// zeroed, so masked bins receive exactly zero gradient.
inline Spectrum apply_windowed_filter(const Spectrum& x, const FilterWindow& window,
                                      const ComplexTensor& w) {
    const std::size_t m = x.num_bins(), d = x.num_features();
    if (w.shape() != x.bins.shape())
        throw DimensionError("filter shape " + shape_str(w.shape()) + " vs spectrum " +
                             shape_str(x.bins.shape()));
    if (window.end > m || window.start >= window.end)
        throw ContractError("filter window [" + std::to_string(window.start) + ", " +
                            std::to_string(window.end) + ") out of range for " +
                            std::to_string(m) + " bins");
    std::vector<double> mask_data(m * d, 0.0);
    for (std::size_t k = window.start; k < window.end; ++k)
        for (std::size_t j = 0; j < d; ++j) mask_data[k * d + j] = 1.0;
    auto mask = make_tensor({m, d}, std::move(mask_data));
    auto masked_w = ComplexTensor(mul(w.real, mask), mul(w.imag, mask));
    return Spectrum{complex_mul(x.bins, masked_w), x.origin_length};
}

// (1-gamma) * dynamic + gamma * static, per bin.
inline Spectrum mix_spectra(const Spectrum& xd, const Spectrum& xs, double gamma) {
    if (gamma < 0.0 || gamma > 1.0)
        throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(gamma));
    if (xd.bins.shape() != xs.bins.shape() || xd.origin_length != xs.origin_length)
        throw DimensionError("mix_spectra operands disagree in shape");
    auto mixed = complex_add(complex_scale(xd.bins, 1.0 - gamma), complex_scale(xs.bins, gamma));
    return Spectrum{mixed, xd.origin_length};
}

// ---------------------------------------------------------------------------

struct FilterParams {
    ComplexTensor w_dynamic;  // [M x d]
    ComplexTensor w_static;   // [M x d]
};

inline FilterParams init_filter_params(std::size_t num_bins, std::size_t hidden,
                                       std::mt19937_64& rng, double stddev = 0.02) {
    return {complex_randn({num_bins, hidden}, rng, stddev, true),
            complex_randn({num_bins, hidden}, rng, stddev, true)};
}

// One filter-mixer block: shared forward FFT, both filter branches, mixture,
// inverse FFT, then residual + LayerNorm + dropout.
inline TensorPtr filter_mixer_forward(const TensorPtr& h, std::size_t layer,
                                      const FilterParams& params, const RampSchedule& schedule,
                                      double gamma, const TensorPtr& ln_gain,
                                      const TensorPtr& ln_bias, double dropout_rate,
                                      std::mt19937_64& rng, bool training) {
    if (layer >= schedule.num_layers())
        throw ContractError("layer " + std::to_string(layer) + " outside schedule of " +
                            std::to_string(schedule.num_layers()));
    const std::size_t n = h->shape[0];
    auto x = rfft(h);
    auto xd = apply_windowed_filter(x, schedule.dfs_windows[layer], params.w_dynamic);
    auto xs = apply_windowed_filter(x, schedule.sfs_windows[layer], params.w_static);
    auto mixed = mix_spectra(xd, xs, gamma);
    auto filtered = irfft(mixed, n);
    auto dropped = dropout(filtered, dropout_rate, rng, training);
    return layer_norm(add(h, dropped), ln_gain, ln_bias);
}

// ---------------------------------------------------------------------------
// Amplitude export (mean modulus over the feature dimension, zero outside the
// window) plus the per-layer static-minus-dynamic coverage differential.

struct FilterAmplitudeRow {
    std::size_t layer;
    std::string filter_kind;  // dynamic | static | differential
    std::size_t bin;
    double amplitude;
};

inline std::vector<FilterAmplitudeRow> filter_amplitude(
    const std::vector<FilterParams>& params, const RampSchedule& schedule) {
    std::vector<FilterAmplitudeRow> rows;
    const std::size_t m = schedule.num_bins;
    auto amplitudes = [m](const ComplexTensor& w, const FilterWindow& win) {
        const std::size_t d = w.shape()[1];
        std::vector<double> amp(m, 0.0);
        for (std::size_t k = win.start; k < win.end; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double re = w.real->data[k * d + j];
                double im = w.imag->data[k * d + j];
                acc += std::sqrt(re * re + im * im);
            }
            amp[k] = acc / static_cast<double>(d);
        }
        return amp;
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto dyn = amplitudes(params[l].w_dynamic, schedule.dfs_windows[l]);
        auto sta = amplitudes(params[l].w_static, schedule.sfs_windows[l]);
        for (std::size_t k = 0; k < m; ++k) rows.push_back({l, "dynamic", k, dyn[k]});
        for (std::size_t k = 0; k < m; ++k) rows.push_back({l, "static", k, sta[k]});
        // Frequencies the static branch recaptures outside the dynamic window.
        for (std::size_t k = 0; k < m; ++k) {
            double diff = schedule.dfs_windows[l].contains(k) ? 0.0 : sta[k];
            rows.push_back({l, "differential", k, diff});
        }
    }
    return rows;
}

}  // namespace slime
