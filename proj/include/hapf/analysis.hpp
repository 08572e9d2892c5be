#pragma once

// Integer-cycle DFT harmonic analysis, THD, RMS and IEEE-519 THD verdicts.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hapf/errors.hpp"

namespace hapf {

/// Peak harmonic magnitudes and cosine-referenced phases for h = 0..h_max:
/// x(t) = mag[0] sign + sum_h mag[h] cos(2 pi h f1 t + phase[h]).
struct Spectrum {
    double f1 = 0.0;
    std::vector<double> magnitude;
    std::vector<double> phase;
    double thd = 0.0; // NaN when the fundamental is zero

    int h_max() const noexcept { return static_cast<int>(magnitude.size()) - 1; }
};

/// Number of samples in n_cycles fundamental periods, or an AnalysisError if
/// that window does not land on a whole number of samples.
inline std::size_t cycle_window_samples(double dt, double f1, int n_cycles) {
    if (!(dt > 0.0) || !(f1 > 0.0))
        throw AnalysisError("dt and f1 must be positive");
    const double exact = n_cycles / (f1 * dt);
    const double rounded = std::round(exact);
    if (rounded < 1.0 || std::abs(exact - rounded) > 1e-9 * exact)
        throw AnalysisError("window of " + std::to_string(n_cycles) + " cycles at f1 = " + std::to_string(f1) +
                            " Hz is not an integral number of dt = " + std::to_string(dt) + " s samples");
    return static_cast<std::size_t>(rounded);
}

namespace detail {

/// A fundamental at rounding-noise level relative to the largest bin counts as zero.
inline bool zero_fundamental(const std::vector<double>& mag) {
    if (mag.size() < 2 || !(mag[1] > 0.0))
        return true;
    double peak = 0.0;
    for (double m : mag)
        peak = std::max(peak, m);
    return mag[1] <= 1e-12 * peak;
}

inline double thd_from(const std::vector<double>& mag) {
    if (zero_fundamental(mag))
        return std::nan("");
    double s = 0.0;
    for (std::size_t h = 2; h < mag.size(); ++h)
        s += mag[h] * mag[h];
    return std::sqrt(s) / mag[1];
}

} // namespace detail

/// Rectangular-window DFT evaluated at the bins h * f1. `samples` must hold
/// exactly n_cycles fundamental periods; the result is exact for signals made
/// of integer harmonics of f1.
inline Spectrum dft_spectrum(std::span<const double> samples, double dt, double f1, int n_cycles, int h_max = 50) {
    if (n_cycles < 5)
        throw AnalysisError("spectrum window must cover at least 5 fundamental cycles");
    if (h_max < 1)
        throw AnalysisError("h_max must be at least 1");
    const std::size_t n = cycle_window_samples(dt, f1, n_cycles);
    if (samples.size() != n)
        throw AnalysisError("window misalignment: expected " + std::to_string(n) + " samples for " +
                            std::to_string(n_cycles) + " cycles, got " + std::to_string(samples.size()));

    std::vector<double> cos_t(n), sin_t(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        cos_t[m] = std::cos(a);
        sin_t[m] = std::sin(a);
    }

    Spectrum s;
    s.f1 = f1;
    s.magnitude.assign(static_cast<std::size_t>(h_max) + 1, 0.0);
    s.phase.assign(static_cast<std::size_t>(h_max) + 1, 0.0);
    const auto dn = static_cast<double>(n);
    for (int h = 0; h <= h_max; ++h) {
        // bin h of an n_cycles window sits at DFT index h * n_cycles
        const std::size_t stride = (static_cast<std::size_t>(h) * static_cast<std::size_t>(n_cycles)) % n;
        double re = 0.0, im = 0.0;
        std::size_t idx = 0;
        for (std::size_t k = 0; k < n; ++k) {
            re += samples[k] * cos_t[idx];
            im -= samples[k] * sin_t[idx];
            idx += stride;
            if (idx >= n)
                idx -= n;
        }
        const double scale = h == 0 ? 1.0 / dn : 2.0 / dn;
        s.magnitude[h] = scale * std::hypot(re, im);
        s.phase[h] = std::atan2(im, re);
    }
    s.thd = detail::thd_from(s.magnitude);
    return s;
}

/// sqrt(sum_{h>=2} mag[h]^2) / mag[1].
inline double thd(const Spectrum& spec) {
    if (detail::zero_fundamental(spec.magnitude))
        throw AnalysisError("THD undefined: zero fundamental");
    return detail::thd_from(spec.magnitude);
}

inline double rms(std::span<const double> samples) noexcept {
    if (samples.empty())
        return 0.0;
    double s = 0.0;
    for (double x : samples)
        s += x * x;
    return std::sqrt(s / static_cast<double>(samples.size()));
}

/// |rms^2 - (mag0^2 + 1/2 sum mag_h^2)|; zero for signals band-limited to h_max.
inline double parseval_residual(std::span<const double> samples, const Spectrum& spec) noexcept {
    const double r = rms(samples);
    double e = spec.magnitude.empty() ? 0.0 : spec.magnitude[0] * spec.magnitude[0];
    for (std::size_t h = 1; h < spec.magnitude.size(); ++h)
        e += 0.5 * spec.magnitude[h] * spec.magnitude[h];
    return std::abs(r * r - e);
}

/// Fundamental displacement power factor cos(phi_v1 - phi_i1).
inline double displacement_power_factor(const Spectrum& voltage, const Spectrum& current) {
    if (voltage.magnitude.size() < 2 || current.magnitude.size() < 2)
        throw AnalysisError("displacement power factor needs the fundamental bin");
    return std::cos(voltage.phase[1] - current.phase[1]);
}

/// Informational IEEE-519 odd-harmonic current limit (% of fundamental) for
/// the I_sc/I_L < 20 row; even harmonics are limited to 25% of the odd value.
inline double ieee519_harmonic_limit_percent(int h) noexcept {
    double odd = 0.0;
    if (h < 11) odd = 4.0;
    else if (h < 17) odd = 2.0;
    else if (h < 23) odd = 1.5;
    else if (h < 35) odd = 0.6;
    else odd = 0.3;
    return h % 2 == 0 ? 0.25 * odd : odd;
}

struct Ieee519Verdict {
    bool pass = false;
    double thd = 0.0;
    double thd_limit = 0.05;
    std::string report;
};

/// Pass iff thd < thd_limit. Only the THD ceiling is gated; the per-harmonic
/// table in the report is informational.
inline Ieee519Verdict ieee519_verdict(const Spectrum& spec, double thd_limit = 0.05) {
    Ieee519Verdict v;
    v.thd = thd(spec);
    v.thd_limit = thd_limit;
    v.pass = v.thd < thd_limit;

    std::string r;
    char line[160];
    std::snprintf(line, sizeof line, "THD %.4f%% (limit %.2f%%): %s\n", 100.0 * v.thd, 100.0 * thd_limit,
                  v.pass ? "PASS" : "FAIL");
    r += line;
    r += "  h   rel_%     limit_%   (per-harmonic limits not gated)\n";
    for (int h = 2; h <= spec.h_max(); ++h) {
        const double rel = 100.0 * spec.magnitude[h] / spec.magnitude[1];
        const double lim = ieee519_harmonic_limit_percent(h);
        std::snprintf(line, sizeof line, "%3d %9.4f %9.2f%s\n", h, rel, lim, rel > lim ? "  over" : "");
        r += line;
    }
    v.report = std::move(r);
    return v;
}

/// Convenience overload for a bare THD value.
inline bool ieee519_pass(double thd_value, double thd_limit = 0.05) noexcept { return thd_value < thd_limit; }

} // namespace hapf
