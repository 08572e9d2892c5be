#pragma once

// pq-theory reference current estimation: split the load power into its
// average and oscillating parts and synthesize the compensating currents.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hapf/frames.hpp"

namespace hapf {

struct PowerSplit {
    double p_avg = 0.0;
    double p_osc = 0.0;
    double q_avg = 0.0;
    double q_osc = 0.0;
};

/// Reference compensating phase currents (i*_r, i*_y, i*_b). They are the
/// currents the filter must draw from the PCC so that the source supplies
/// only the average real power plus the converter loss power.
struct ReferenceCurrents {
    PhaseTriple i;
};

/// Trailing moving average over a fixed number of samples.
///
/// The running sum is rebuilt from the ring every `recompute_windows` full
/// windows so accumulated rounding stays bounded on long runs. Until the ring
/// first fills, the mean of the samples seen so far is reported.
class MovingAverage {
public:
    explicit MovingAverage(std::size_t window_length, std::size_t recompute_windows = 10)
        : ring_(window_length, 0.0), recompute_every_(window_length * recompute_windows) {
        if (window_length == 0)
            throw std::invalid_argument("moving average window must hold at least one sample");
        if (recompute_windows == 0)
            throw std::invalid_argument("recompute interval must be positive");
    }

    double push(double x) {
        if (count_ >= ring_.size())
            sum_ -= ring_[head_];
        ring_[head_] = x;
        sum_ += x;
        head_ = (head_ + 1) % ring_.size();
        if (count_ < ring_.size())
            ++count_;
        if (++since_recompute_ >= recompute_every_) {
            recompute();
            since_recompute_ = 0;
        }
        return mean();
    }

    double mean() const noexcept { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
    bool filled() const noexcept { return count_ == ring_.size(); }
    std::size_t window_length() const noexcept { return ring_.size(); }
    std::size_t size() const noexcept { return count_; }

    /// Mean computed directly from the stored samples (test oracle for drift).
    double exact_mean() const {
        double s = 0.0;
        for (std::size_t k = 0; k < count_; ++k)
            s += ring_[k];
        return count_ == 0 ? 0.0 : s / static_cast<double>(count_);
    }

private:
    void recompute() {
        double s = 0.0;
        for (std::size_t k = 0; k < count_; ++k)
            s += ring_[k];
        sum_ = s;
    }

    std::vector<double> ring_;
    std::size_t recompute_every_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    std::size_t since_recompute_ = 0;
    double sum_ = 0.0;
};

/// Window length for one fundamental period at time step dt.
inline std::size_t period_samples(double f1, double dt) {
    return static_cast<std::size_t>(std::llround(1.0 / (f1 * dt)));
}

/// Separates a stream of (p, q) samples into average and oscillating parts.
class PowerSeparator {
public:
    explicit PowerSeparator(std::size_t window_length) : p_(window_length), q_(window_length) {}

    PowerSplit separate(const PowerPair& s) {
        PowerSplit out;
        out.p_avg = p_.push(s.p);
        out.q_avg = q_.push(s.q);
        out.p_osc = s.p - out.p_avg;
        out.q_osc = s.q - out.q_avg;
        return out;
    }

    bool filled() const noexcept { return p_.filled(); }
    const MovingAverage& p_average() const noexcept { return p_; }
    const MovingAverage& q_average() const noexcept { return q_; }

private:
    MovingAverage p_;
    MovingAverage q_;
};

/// Instantaneous (p_L, q_L) of the load.
inline PowerPair load_power(const AlphaBeta& e, const AlphaBeta& i_load) noexcept {
    return instantaneous_power(e, i_load);
}

/// Compensating current in the alpha-beta frame: K^-1 (-p_osc + p_ave, -q_total).
inline AlphaBeta compensation_reference_ab(const AlphaBeta& e, const PowerSplit& split, double q_total,
                                           double p_ave, double eps_sing = kDefaultSingularThreshold) {
    const PowerPair target{-split.p_osc + p_ave, -q_total};
    return currents_from_power(e, target, eps_sing);
}

/// Compensating phase currents. q_total is the full q_L (average and oscillating).
inline ReferenceCurrents compensation_reference(const AlphaBeta& e, const PowerSplit& split, double q_total,
                                                double p_ave, double eps_sing = kDefaultSingularThreshold) {
    return {clarke_inverse(compensation_reference_ab(e, split, q_total, p_ave, eps_sing))};
}

} // namespace hapf
