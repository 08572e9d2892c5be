#pragma once

#include <stdexcept>

namespace hapf {

struct DcBusParams {
    double v_ref = 750.0;             // V
    double gain = 50.0;               // W/V
    double v_meas_filter_tau = 5e-3;  // s
};

/// Proportional DC-bus voltage controller. The measured capacitor voltage is
/// smoothed by a first-order lag and the error against v_ref is scaled into
/// the loss power p_ave. Positive p_ave draws real power that charges the bus.
class DcBusController {
public:
    explicit DcBusController(DcBusParams params = {}) : params_(params), filtered_(params.v_ref) {
        if (!(params_.gain > 0.0))
            throw std::invalid_argument("DC-bus gain must be positive");
        if (!(params_.v_ref > 0.0))
            throw std::invalid_argument("DC-bus reference voltage must be positive");
        if (!(params_.v_meas_filter_tau >= 0.0))
            throw std::invalid_argument("DC-bus filter time constant must be non-negative");
    }

    /// Seeds the measurement filter, e.g. with the initial capacitor voltage.
    void reset(double v_dc) noexcept { filtered_ = v_dc; }

    double regulate(double v_dc_measured, double dt) {
        if (!(dt > 0.0))
            throw std::invalid_argument("dt must be positive");
        // backward-Euler first-order lag
        filtered_ += dt / (params_.v_meas_filter_tau + dt) * (v_dc_measured - filtered_);
        return params_.gain * (params_.v_ref - filtered_);
    }

    double filtered() const noexcept { return filtered_; }
    const DcBusParams& params() const noexcept { return params_; }

private:
    DcBusParams params_;
    double filtered_;
};

} // namespace hapf
