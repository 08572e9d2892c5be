#pragma once

// Phase (r, y, b) <-> stationary alpha-beta frame transforms and the
// instantaneous real/imaginary power map K.

#include <array>
#include <cmath>

#include "hapf/errors.hpp"

namespace hapf {

/// One sample of a per-phase quantity. The unit (V or A) comes from context.
struct PhaseTriple {
    double r = 0.0;
    double y = 0.0;
    double b = 0.0;

    constexpr double sum() const noexcept { return r + y + b; }
    constexpr double mean() const noexcept { return (r + y + b) / 3.0; }

    /// Same triple with its common-mode (zero-sequence) component removed.
    constexpr PhaseTriple without_common_mode() const noexcept {
        const double m = mean();
        return {r - m, y - m, b - m};
    }

    constexpr double& operator[](int k) noexcept { return k == 0 ? r : (k == 1 ? y : b); }
    constexpr double operator[](int k) const noexcept { return k == 0 ? r : (k == 1 ? y : b); }

    friend constexpr PhaseTriple operator+(PhaseTriple x, PhaseTriple z) noexcept {
        return {x.r + z.r, x.y + z.y, x.b + z.b};
    }
    friend constexpr PhaseTriple operator-(PhaseTriple x, PhaseTriple z) noexcept {
        return {x.r - z.r, x.y - z.y, x.b - z.b};
    }
    friend constexpr PhaseTriple operator-(PhaseTriple x) noexcept { return {-x.r, -x.y, -x.b}; }
    friend constexpr PhaseTriple operator*(double s, PhaseTriple x) noexcept {
        return {s * x.r, s * x.y, s * x.b};
    }
    friend constexpr bool operator==(const PhaseTriple&, const PhaseTriple&) = default;
};

/// Alpha and beta components of a zero-sequence-free quantity.
struct AlphaBeta {
    double a = 0.0;
    double b = 0.0;

    constexpr double norm_sq() const noexcept { return a * a + b * b; }

    friend constexpr AlphaBeta operator+(AlphaBeta x, AlphaBeta z) noexcept { return {x.a + z.a, x.b + z.b}; }
    friend constexpr AlphaBeta operator-(AlphaBeta x, AlphaBeta z) noexcept { return {x.a - z.a, x.b - z.b}; }
    friend constexpr AlphaBeta operator*(double s, AlphaBeta x) noexcept { return {s * x.a, s * x.b}; }
    friend constexpr bool operator==(const AlphaBeta&, const AlphaBeta&) = default;
};

/// Instantaneous real power p [W] and imaginary power q [var].
struct PowerPair {
    double p = 0.0;
    double q = 0.0;

    friend constexpr bool operator==(const PowerPair&, const PowerPair&) = default;
};

/// The power-invariant Clarke matrix H (2x3) and its transpose (3x2).
struct ClarkeConstants {
    using Forward = std::array<std::array<double, 3>, 2>;
    using Inverse = std::array<std::array<double, 2>, 3>;

    static Forward H() noexcept {
        const double k = std::sqrt(2.0 / 3.0);
        const double s = std::sqrt(3.0) / 2.0;
        return {{{k, -0.5 * k, -0.5 * k}, {0.0, k * s, -k * s}}};
    }

    static Inverse H_inv() noexcept {
        const auto h = H();
        Inverse t{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j)
                t[i][j] = h[j][i];
        return t;
    }
};

/// Floor on e_alpha^2 + e_beta^2 below which K is treated as singular:
/// 1e-6 times the squared rated peak phase voltage.
inline double singular_threshold(double rated_peak_voltage) noexcept {
    return 1e-6 * rated_peak_voltage * rated_peak_voltage;
}

/// Threshold for the default 220 Vrms supply.
inline const double kDefaultSingularThreshold = singular_threshold(220.0 * std::sqrt(2.0));

inline AlphaBeta clarke_forward(const PhaseTriple& x) noexcept {
    const auto h = ClarkeConstants::H();
    return {h[0][0] * x.r + h[0][1] * x.y + h[0][2] * x.b,
            h[1][0] * x.r + h[1][1] * x.y + h[1][2] * x.b};
}

inline PhaseTriple clarke_inverse(const AlphaBeta& x) noexcept {
    const auto t = ClarkeConstants::H_inv();
    return {t[0][0] * x.a + t[0][1] * x.b,
            t[1][0] * x.a + t[1][1] * x.b,
            t[2][0] * x.a + t[2][1] * x.b};
}

/// (p, q) = K (i_alpha, i_beta) with K = [[e_a, e_b], [-e_b, e_a]].
inline PowerPair instantaneous_power(const AlphaBeta& e, const AlphaBeta& i) noexcept {
    return {e.a * i.a + e.b * i.b, -e.b * i.a + e.a * i.b};
}

/// Inverse of instantaneous_power for a fixed voltage: i = K^-1 (p, q), K^-1 = K^T / |e|^2.
inline AlphaBeta currents_from_power(const AlphaBeta& e, const PowerPair& s,
                                     double eps_sing = kDefaultSingularThreshold) {
    const double d = e.norm_sq();
    if (!(d >= eps_sing) || !(d > 0.0))
        throw SingularVoltageError("e_alpha^2 + e_beta^2 = " + std::to_string(d) +
                                   " is below the singularity floor " + std::to_string(eps_sing));
    return {(e.a * s.p - e.b * s.q) / d, (e.b * s.p + e.a * s.q) / d};
}

} // namespace hapf
