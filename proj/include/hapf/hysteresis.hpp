#pragma once

#include <array>
#include <stdexcept>

#include "hapf/frames.hpp"

namespace hapf {

/// Converter leg state. HIGH ties the phase terminal to the positive rail,
/// which raises the converter output current of that phase.
enum class LegState : unsigned char { Low = 0, High = 1 };

struct SwitchCommand {
    std::array<LegState, 3> leg{LegState::Low, LegState::Low, LegState::Low};

    /// +1 for HIGH, -1 for LOW.
    int sign(int phase) const noexcept { return leg[phase] == LegState::High ? 1 : -1; }

    friend bool operator==(const SwitchCommand&, const SwitchCommand&) = default;
};

struct HysteresisBand {
    double half_width = 0.5; // A

    explicit HysteresisBand(double hw = 0.5) : half_width(hw) {
        if (!(half_width > 0.0))
            throw std::invalid_argument("hysteresis half-width must be positive");
    }
};

/// Independent per-phase band comparator: above the band -> LOW, below -> HIGH,
/// inside -> hold the previous state.
inline SwitchCommand update(const HysteresisBand& band, const PhaseTriple& i_actual, const PhaseTriple& i_ref,
                            const SwitchCommand& prev) noexcept {
    SwitchCommand next = prev;
    for (int k = 0; k < 3; ++k) {
        const double err = i_actual[k] - i_ref[k];
        if (err > band.half_width)
            next.leg[k] = LegState::Low;
        else if (err < -band.half_width)
            next.leg[k] = LegState::High;
    }
    return next;
}

/// Number of legs whose state differs between two commands.
inline int transitions(const SwitchCommand& a, const SwitchCommand& b) noexcept {
    int n = 0;
    for (int k = 0; k < 3; ++k)
        n += a.leg[k] != b.leg[k];
    return n;
}

} // namespace hapf
