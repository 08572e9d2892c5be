#pragma once

// Fixed-step backward-Euler model of the hybrid filter plant:
//
//   ideal 3-phase EMF -- R_s, L_s -- PCC --+-- L_L -- 6-pulse diode bridge -- C_L || R_L
//                                          +-- 5th / 7th / high-pass branches (isolated star)
//                                          +-- L_f -- two-level VSC -- C_dc
//
// Every shunt subsystem is reduced to a Norton equivalent i = Y v_pcc + J
// seen from the PCC, so each step is one 3x3 node solve plus a 5x5 solve for
// the rectifier interior, repeated until the diode pattern is self-consistent.
// All three subsystems have floating neutrals, so currents and PCC voltages
// stay zero-sequence free.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "hapf/dc_bus.hpp"
#include "hapf/errors.hpp"
#include "hapf/estimator.hpp"
#include "hapf/frames.hpp"
#include "hapf/hysteresis.hpp"

namespace hapf {

enum class BranchKind {
    SeriesRlc, // R, L and C in series (single-tuned)
    HighPass,  // C in series with (R parallel L)
};

struct BranchParams {
    double C = 0.0; // F
    double L = 0.0; // H
    double R = 0.0; // ohm

    /// Series resonance 1/(2 pi sqrt(LC)).
    double tuned_frequency() const noexcept { return 1.0 / (2.0 * std::numbers::pi * std::sqrt(L * C)); }
};

struct PassiveFilterParams {
    BranchParams fifth{20e-6, 0.0199, 0.629};
    BranchParams seventh{10e-6, 0.0204, 0.902};
    BranchParams high_pass{3.25e-6, 0.025, 260.0};
};

enum class Mode { Baseline, PassiveOnly, Hybrid };

inline std::string to_string(Mode m) {
    switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::PassiveOnly: return "passive_only";
    case Mode::Hybrid: return "hybrid";
    }
    return "unknown";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
    if (s == "baseline") return Mode::Baseline;
    if (s == "passive_only") return Mode::PassiveOnly;
    if (s == "hybrid") return Mode::Hybrid;
    return std::nullopt;
}

struct CircuitParams {
    double V_s = 220.0;      // V rms, phase
    double f1 = 50.0;        // Hz
    double L_s = 0.0016;     // H
    double R_s = 0.01;       // ohm
    double L_L = 0.023;      // H, rectifier front-end inductance
    double C_L = 50e-6;      // F
    double R_L = 78.0;       // ohm
    double C_dc = 4500e-6;   // F
    double L_f = 2.5e-3;     // H, VSC coupling inductance
    double R_on = 1e-3;      // ohm
    double R_off = 1e6;      // ohm
    double dt = 2e-6;        // s
    int max_diode_iters = 20;
    PassiveFilterParams passive;

    double peak_voltage() const noexcept { return V_s * std::numbers::sqrt2; }

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string(name) + " must be positive and finite");
        };
        if (!(V_s >= 0.0) || !std::isfinite(V_s))
            throw std::invalid_argument("V_s must be non-negative and finite");
        positive(f1, "f1");
        positive(L_s, "L_s");
        if (!(R_s >= 0.0))
            throw std::invalid_argument("R_s must be non-negative");
        positive(L_L, "L_L");
        positive(C_L, "C_L");
        positive(R_L, "R_L");
        positive(C_dc, "C_dc");
        positive(L_f, "L_f");
        positive(R_on, "R_on");
        positive(R_off, "R_off");
        positive(dt, "dt");
        if (dt > 5e-6)
            throw std::invalid_argument("dt must not exceed 5e-6 s");
        if (!(R_off > R_on))
            throw std::invalid_argument("R_off must exceed R_on");
        if (max_diode_iters < 1)
            throw std::invalid_argument("max_diode_iters must be at least 1");
        for (const auto* b : {&passive.fifth, &passive.seventh, &passive.high_pass}) {
            positive(b->C, "branch C");
            positive(b->L, "branch L");
            positive(b->R, "branch R");
        }
    }
};

/// Balanced mains EMF: phase r at 0, y at -2pi/3, b at +2pi/3.
inline PhaseTriple source_voltage(double t, const CircuitParams& params) {
    if (t < 0.0)
        throw std::invalid_argument("source_voltage: t must be non-negative");
    const double a = params.peak_voltage();
    const double w = 2.0 * std::numbers::pi * params.f1 * t;
    constexpr double shift = 2.0 * std::numbers::pi / 3.0;
    return {a * std::sin(w), a * std::sin(w - shift), a * std::sin(w + shift)};
}

// ---------------------------------------------------------------------------
// Passive branches

struct BranchState {
    PhaseTriple i_l; // inductor current (series current for SeriesRlc)
    PhaseTriple v_c; // capacitor voltage
};

/// One three-phase passive branch set, star-connected with an isolated neutral.
class PassiveBranch {
public:
    PassiveBranch(BranchKind kind, BranchParams p, double dt) : kind_(kind), p_(p), dt_(dt) {
        if (kind_ == BranchKind::SeriesRlc) {
            g_ = 1.0 / (p_.R + p_.L / dt_ + dt_ / p_.C);
        } else {
            g_c_ = p_.C / dt_;
            g_rl_ = 1.0 / p_.R + dt_ / p_.L;
            g_ = g_c_ * g_rl_ / (g_c_ + g_rl_);
        }
    }

    BranchKind kind() const noexcept { return kind_; }
    const BranchParams& params() const noexcept { return p_; }

    /// Per-phase companion conductance: i_k = g * v_k + history_k.
    double conductance() const noexcept { return g_; }

    double history(double i_l, double v_c) const noexcept {
        if (kind_ == BranchKind::SeriesRlc)
            return g_ * (p_.L / dt_ * i_l - v_c);
        return -g_ * v_c + g_c_ / (g_c_ + g_rl_) * i_l;
    }

    PhaseTriple history(const BranchState& s) const noexcept {
        return {history(s.i_l.r, s.v_c.r), history(s.i_l.y, s.v_c.y), history(s.i_l.b, s.v_c.b)};
    }

    /// Advances one phase given the voltage across the branch; returns the branch current.
    double advance_phase(double& i_l, double& v_c, double v) const noexcept {
        if (kind_ == BranchKind::SeriesRlc) {
            const double i = g_ * v + history(i_l, v_c);
            v_c += dt_ / p_.C * i;
            i_l = i;
            return i;
        }
        const double v_rl = (g_c_ * (v - v_c) - i_l) / (g_c_ + g_rl_);
        const double i = g_rl_ * v_rl + i_l;
        i_l += dt_ / p_.L * v_rl;
        v_c = v - v_rl;
        return i;
    }

    /// Norton equivalent seen from the PCC with the isolated neutral eliminated.
    /// Returns (Y, J) with i_branch = Y v_pcc + J.
    std::pair<Eigen::Matrix3d, Eigen::Vector3d> norton(const BranchState& s) const {
        const PhaseTriple h = history(s).without_common_mode();
        const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - Eigen::Matrix3d::Constant(1.0 / 3.0);
        return {g_ * proj, Eigen::Vector3d(h.r, h.y, h.b)};
    }

    /// Advances all three phases against the PCC voltages; returns the
    /// currents drawn from the PCC.
    PhaseTriple step(BranchState& s, const PhaseTriple& v_pcc) const noexcept {
        const PhaseTriple h = history(s);
        const double v_n = v_pcc.mean() + h.mean() / g_;
        PhaseTriple i;
        for (int k = 0; k < 3; ++k)
            i[k] = advance_phase(s.i_l[k], s.v_c[k], v_pcc[k] - v_n);
        return i;
    }

    double stored_energy(const BranchState& s) const noexcept {
        double e = 0.0;
        for (int k = 0; k < 3; ++k)
            e += 0.5 * p_.L * s.i_l[k] * s.i_l[k] + 0.5 * p_.C * s.v_c[k] * s.v_c[k];
        return e;
    }

private:
    BranchKind kind_;
    BranchParams p_;
    double dt_;
    double g_ = 0.0;
    double g_c_ = 0.0;
    double g_rl_ = 0.0;
};

/// Steady-state impedance magnitude of a branch at frequency f (analytic).
inline double branch_impedance(BranchKind kind, const BranchParams& p, double f) {
    const double w = 2.0 * std::numbers::pi * f;
    const std::complex<double> zc{0.0, -1.0 / (w * p.C)};
    const std::complex<double> zl{0.0, w * p.L};
    if (kind == BranchKind::SeriesRlc)
        return std::abs(p.R + zl + zc);
    return std::abs(zc + p.R * zl / (p.R + zl));
}

// ---------------------------------------------------------------------------
// Six-pulse diode rectifier

/// Diode pattern bit layout: bit k (k = 0..2) is the upper diode of phase k
/// (anode at bridge input k, cathode at the positive DC rail); bit 3 + k is
/// the lower diode of phase k (anode at the negative rail).
using DiodePattern = std::uint8_t;

inline int conducting_count(DiodePattern p) noexcept { return std::popcount(static_cast<unsigned>(p)); }

struct RectifierState {
    PhaseTriple i;        // AC-side currents drawn from the PCC through L_L
    double v_cl = 0.0;    // DC capacitor voltage
    DiodePattern pattern = 0;
};

/// Interior node voltages of the bridge: inputs a_r, a_y, a_b, then the DC rails.
struct RectifierNodes {
    Eigen::Matrix<double, 5, 1> x;

    double input(int k) const { return x(k); }
    double rail_pos() const { return x(3); }
    double rail_neg() const { return x(4); }
};

class Rectifier {
public:
    /// A conducting diode is turned off only once its current is below
    /// -kReverseCurrentTolerance, and a blocking diode turned on only once its
    /// forward bias exceeds kForwardVoltageTolerance. The slack absorbs steps
    /// in which a commutation starts exactly at zero current.
    static constexpr double kReverseCurrentTolerance = 1e-4; // A
    static constexpr double kForwardVoltageTolerance = 1e-3; // V

    Rectifier(const CircuitParams& p) // NOLINT(google-explicit-constructor)
        : g_ll_(p.dt / p.L_L), g_on_(1.0 / p.R_on), g_off_(1.0 / p.R_off), g_cl_(p.C_L / p.dt),
          g_rl_(1.0 / p.R_L), max_iters_(p.max_diode_iters) {}

    /// Voltage across each diode (anode - cathode) for the given interior solution.
    std::array<double, 6> diode_voltages(const RectifierNodes& n) const noexcept {
        std::array<double, 6> v{};
        for (int k = 0; k < 3; ++k) {
            v[k] = n.input(k) - n.rail_pos();
            v[3 + k] = n.rail_neg() - n.input(k);
        }
        return v;
    }

    /// Diodes whose state contradicts their bias beyond the tolerances.
    DiodePattern violations(const RectifierNodes& n, DiodePattern pattern) const noexcept {
        const auto v = diode_voltages(n);
        DiodePattern out = 0;
        for (int d = 0; d < 6; ++d) {
            const bool on = (pattern >> d) & 1u;
            if (on ? v[d] * g_on_ < -kReverseCurrentTolerance : v[d] > kForwardVoltageTolerance)
                out |= static_cast<DiodePattern>(1u << d);
        }
        return out;
    }

    /// Next pattern guess: flip every violating diode for the first
    /// iterations, then only the worst one so that cycles are broken.
    DiodePattern next_guess(const RectifierNodes& n, DiodePattern current, int iteration) const noexcept {
        const DiodePattern bad = violations(n, current);
        if (iteration < max_iters_ / 4)
            return current ^ bad;
        const auto v = diode_voltages(n);
        int worst = -1;
        double worst_v = -1.0;
        for (int d = 0; d < 6; ++d) {
            if (!((bad >> d) & 1u))
                continue;
            const bool on = (current >> d) & 1u;
            const double violation = on ? -v[d] * g_on_ / kReverseCurrentTolerance : v[d] / kForwardVoltageTolerance;
            if (violation > worst_v) {
                worst_v = violation;
                worst = d;
            }
        }
        return worst < 0 ? current : static_cast<DiodePattern>(current ^ (1u << worst));
    }

    /// Norton equivalent (i = Y v_pcc + J) for a fixed diode pattern.
    std::pair<Eigen::Matrix3d, Eigen::Vector3d> norton(const RectifierState& s, DiodePattern pattern) const {
        const auto& c = cache(pattern);
        const Eigen::Matrix<double, 5, 1> h = history(s);
        const Eigen::Vector3d a_h = (c.minv * h).head<3>();
        return {c.y, Eigen::Vector3d(s.i.r, s.i.y, s.i.b) - g_ll_ * a_h};
    }

    RectifierNodes solve_interior(const RectifierState& s, DiodePattern pattern, const PhaseTriple& v_pcc) const {
        const auto& c = cache(pattern);
        Eigen::Matrix<double, 5, 1> rhs = history(s);
        for (int k = 0; k < 3; ++k)
            rhs(k) += g_ll_ * v_pcc[k];
        return {c.minv * rhs};
    }

    /// Commits the step: new AC currents, DC voltage and pattern.
    void commit(RectifierState& s, DiodePattern pattern, const RectifierNodes& n, const PhaseTriple& v_pcc) const {
        for (int k = 0; k < 3; ++k)
            s.i[k] = g_ll_ * (v_pcc[k] - n.input(k)) + s.i[k];
        s.v_cl = n.rail_pos() - n.rail_neg();
        s.pattern = pattern;
    }

    /// Advances the rectifier alone against prescribed PCC voltages, iterating
    /// the diode pattern to consistency. Returns the number of iterations used.
    int step(RectifierState& s, const PhaseTriple& v_pcc) const {
        DiodePattern pattern = s.pattern;
        for (int it = 0; it < max_iters_; ++it) {
            const RectifierNodes n = solve_interior(s, pattern, v_pcc);
            if (violations(n, pattern) == 0) {
                commit(s, pattern, n, v_pcc);
                return it + 1;
            }
            pattern = next_guess(n, pattern, it);
        }
        throw SolverError("diode pattern did not converge within " + std::to_string(max_iters_) +
                          " iterations; reduce dt");
    }

    int max_iterations() const noexcept { return max_iters_; }

    double stored_energy(const RectifierState& s, const CircuitParams& p) const noexcept {
        double e = 0.5 * p.C_L * s.v_cl * s.v_cl;
        for (int k = 0; k < 3; ++k)
            e += 0.5 * p.L_L * s.i[k] * s.i[k];
        return e;
    }

private:
    struct Cache {
        Eigen::Matrix<double, 5, 5> minv;
        Eigen::Matrix3d y;
    };

    Eigen::Matrix<double, 5, 1> history(const RectifierState& s) const noexcept {
        Eigen::Matrix<double, 5, 1> h;
        h << s.i.r, s.i.y, s.i.b, g_cl_ * s.v_cl, -g_cl_ * s.v_cl;
        return h;
    }

    const Cache& cache(DiodePattern pattern) const {
        auto& slot = cache_[pattern & 0x3f];
        if (!slot) {
            Eigen::Matrix<double, 5, 5> m = Eigen::Matrix<double, 5, 5>::Zero();
            const double g_dc = g_cl_ + g_rl_;
            for (int k = 0; k < 3; ++k) {
                const double gu = ((pattern >> k) & 1u) ? g_on_ : g_off_;
                const double gd = ((pattern >> (3 + k)) & 1u) ? g_on_ : g_off_;
                m(k, k) = g_ll_ + gu + gd;
                m(k, 3) = m(3, k) = -gu;
                m(k, 4) = m(4, k) = -gd;
                m(3, 3) += gu;
                m(4, 4) += gd;
            }
            m(3, 3) += g_dc;
            m(4, 4) += g_dc;
            m(3, 4) = m(4, 3) = -g_dc;
            Cache c;
            c.minv = m.partialPivLu().inverse();
            c.y = g_ll_ * (Eigen::Matrix3d::Identity() - g_ll_ * c.minv.topLeftCorner<3, 3>());
            slot = c;
        }
        return *slot;
    }

    double g_ll_, g_on_, g_off_, g_cl_, g_rl_;
    int max_iters_;
    mutable std::array<std::optional<Cache>, 64> cache_{};
};

// ---------------------------------------------------------------------------
// Voltage-source converter

/// Two-level leg voltages (+-v_dc/2) with the common mode removed, i.e. the
/// voltages the legs impose across a floating three-wire connection.
inline PhaseTriple vsc_terminal_voltage(const SwitchCommand& cmd, double v_dc) {
    if (v_dc < 0.0)
        throw std::invalid_argument("vsc_terminal_voltage: v_dc must be non-negative");
    PhaseTriple legs;
    for (int k = 0; k < 3; ++k)
        legs[k] = cmd.sign(k) * 0.5 * v_dc;
    return legs.without_common_mode();
}

/// Current leaving the positive DC rail: the sum of output currents of the
/// legs tied to it.
inline double dc_rail_current(const SwitchCommand& cmd, const PhaseTriple& i_out) noexcept {
    double i = 0.0;
    for (int k = 0; k < 3; ++k)
        if (cmd.leg[k] == LegState::High)
            i += i_out[k];
    return i;
}

/// Backward-Euler capacitor update: C_dc dv/dt = -(current leaving the + rail).
/// i_out are the converter output currents (flowing from the legs to the PCC).
inline double dc_link_step(double v_dc, const SwitchCommand& cmd, const PhaseTriple& i_out, double c_dc, double dt) {
    return v_dc - dt / c_dc * dc_rail_current(cmd, i_out);
}

// ---------------------------------------------------------------------------
// Full plant

/// Which voltage the pq estimator uses for e_alpha, e_beta.
enum class VoltageSense { Source, Pcc };
/// Which current the estimator treats as the load to be compensated.
enum class ReferenceInput { Load, LoadAndPassive };

struct ControllerParams {
    DcBusParams dc_bus;
    double band_half_width = 0.5; // A
    VoltageSense voltage_sense = VoltageSense::Source;
    ReferenceInput reference_input = ReferenceInput::LoadAndPassive;
};

struct SimState {
    double time = 0.0;
    PhaseTriple i_source;
    std::array<BranchState, 3> passive{};
    RectifierState rectifier;
    PhaseTriple i_vsc; // converter output current, leg -> PCC
    double v_dc = 0.0;
    SwitchCommand command;
};

/// Everything observable about one accepted step.
struct StepOutputs {
    double time = 0.0;
    PhaseTriple v_source;
    PhaseTriple v_pcc;
    PhaseTriple i_source;
    PhaseTriple i_load;
    PhaseTriple i_passive;
    PhaseTriple i_vsc;
    PhaseTriple i_vsc_ref; // converter output reference (= -i*)
    PhaseTriple i_vsc_at_ref; // converter current sampled against i_vsc_ref
    PowerPair load_pq;
    double p_ave = 0.0;
    double v_cl = 0.0;
    double v_dc = 0.0;
    double kcl_residual = 0.0; // max over phases, A
    int switch_transitions = 0;
    int diode_iterations = 0;
    DiodePattern diode_pattern = 0;
};

class Simulator {
public:
    Simulator(CircuitParams params, Mode mode, ControllerParams ctrl = {}, std::optional<double> v_dc_initial = {})
        : params_((params.validate(), params)), mode_(mode), ctrl_(ctrl), rectifier_(params_),
          branches_{PassiveBranch(BranchKind::SeriesRlc, params_.passive.fifth, params_.dt),
                    PassiveBranch(BranchKind::SeriesRlc, params_.passive.seventh, params_.dt),
                    PassiveBranch(BranchKind::HighPass, params_.passive.high_pass, params_.dt)},
          separator_(period_samples(params_.f1, params_.dt)), dc_bus_(ctrl.dc_bus), band_(ctrl.band_half_width),
          eps_sing_(singular_threshold(params_.peak_voltage())) {
        state_.v_dc = v_dc_initial.value_or(ctrl.dc_bus.v_ref);
        if (state_.v_dc < 0.0)
            throw std::invalid_argument("initial v_dc must be non-negative");
        dc_bus_.reset(state_.v_dc);
    }

    const CircuitParams& params() const noexcept { return params_; }
    Mode mode() const noexcept { return mode_; }
    const ControllerParams& controller() const noexcept { return ctrl_; }
    const SimState& state() const noexcept { return state_; }
    SimState& mutable_state() noexcept { return state_; }
    const StepOutputs& last() const noexcept { return out_; }
    std::uint64_t steps() const noexcept { return n_steps_; }

    bool passive_enabled() const noexcept { return mode_ != Mode::Baseline; }
    bool vsc_enabled() const noexcept { return mode_ == Mode::Hybrid; }

    /// Overrides the source amplitude scaling (1 = nominal, 0 = shorted EMF).
    void set_source_scale(double s) noexcept { source_scale_ = s; }

    /// One fixed-step advance of the whole plant followed by the control chain.
    const StepOutputs& step() {
        const double dt = params_.dt;
        const double t = static_cast<double>(n_steps_ + 1) * dt;
        const PhaseTriple v_s = source_scale_ * source_voltage(t, params_);

        const double g_s = 1.0 / (params_.R_s + params_.L_s / dt);
        const Eigen::Vector3d v_s_vec(v_s.r, v_s.y, v_s.b);
        const Eigen::Vector3d i_s_old(state_.i_source.r, state_.i_source.y, state_.i_source.b);

        // Fixed (pattern independent) part of the PCC equation.
        Eigen::Matrix3d y_fixed = g_s * Eigen::Matrix3d::Identity();
        Eigen::Vector3d rhs_fixed = g_s * v_s_vec + g_s * (params_.L_s / dt) * i_s_old;
        if (passive_enabled()) {
            for (std::size_t j = 0; j < branches_.size(); ++j) {
                const auto [y, jv] = branches_[j].norton(state_.passive[j]);
                y_fixed += y;
                rhs_fixed -= jv;
            }
        }
        PhaseTriple e_vsc;
        const double g_f = dt / params_.L_f;
        if (vsc_enabled()) {
            // drawn current = -(g_f (e - v_pcc) + i_old), all common-mode free
            e_vsc = vsc_terminal_voltage(state_.command, state_.v_dc);
            const PhaseTriple i_old = state_.i_vsc.without_common_mode();
            const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - Eigen::Matrix3d::Constant(1.0 / 3.0);
            y_fixed += g_f * proj;
            rhs_fixed += g_f * Eigen::Vector3d(e_vsc.r, e_vsc.y, e_vsc.b) + Eigen::Vector3d(i_old.r, i_old.y, i_old.b);
        }

        // Diode pattern iteration around the PCC node solve.
        DiodePattern pattern = state_.rectifier.pattern;
        PhaseTriple v_pcc;
        RectifierNodes nodes;
        int iters = 0;
        for (;;) {
            const auto [y_r, j_r] = rectifier_.norton(state_.rectifier, pattern);
            const Eigen::Vector3d v = (y_fixed + y_r).partialPivLu().solve(rhs_fixed - j_r);
            v_pcc = {v(0), v(1), v(2)};
            nodes = rectifier_.solve_interior(state_.rectifier, pattern, v_pcc);
            ++iters;
            if (rectifier_.violations(nodes, pattern) == 0)
                break;
            if (iters >= rectifier_.max_iterations())
                throw SolverError("diode pattern did not converge within " +
                                  std::to_string(rectifier_.max_iterations()) + " iterations at t = " +
                                  std::to_string(t) + " s; reduce dt");
            pattern = rectifier_.next_guess(nodes, pattern, iters - 1);
        }

        // Commit element states from the solved PCC voltage.
        StepOutputs o;
        o.time = t;
        o.v_source = v_s;
        o.v_pcc = v_pcc;
        o.diode_iterations = iters;
        o.diode_pattern = pattern;

        PhaseTriple i_s;
        for (int k = 0; k < 3; ++k)
            i_s[k] = g_s * (v_s[k] - v_pcc[k] + params_.L_s / dt * state_.i_source[k]);
        state_.i_source = i_s;

        rectifier_.commit(state_.rectifier, pattern, nodes, v_pcc);
        o.i_load = state_.rectifier.i;
        o.v_cl = state_.rectifier.v_cl;

        if (passive_enabled())
            for (std::size_t j = 0; j < branches_.size(); ++j)
                o.i_passive = o.i_passive + branches_[j].step(state_.passive[j], v_pcc);

        if (vsc_enabled()) {
            const PhaseTriple i_old = state_.i_vsc.without_common_mode();
            const PhaseTriple across = (e_vsc - v_pcc.without_common_mode());
            state_.i_vsc = g_f * across + i_old;
            state_.v_dc = dc_link_step(state_.v_dc, state_.command, state_.i_vsc, params_.C_dc, dt);
        }
        o.i_vsc = state_.i_vsc;
        o.i_source = i_s;
        o.v_dc = state_.v_dc;

        double kcl = 0.0;
        for (int k = 0; k < 3; ++k)
            kcl = std::max(kcl, std::abs(i_s[k] - o.i_load[k] - o.i_passive[k] + o.i_vsc[k]));
        o.kcl_residual = kcl;

        if (vsc_enabled())
            run_control(o);

        state_.time = t;
        ++n_steps_;
        out_ = o;
        return out_;
    }

    /// Total energy stored in inductors and capacitors of the enabled subsystems.
    double stored_energy() const noexcept {
        double e = 0.0;
        for (int k = 0; k < 3; ++k)
            e += 0.5 * params_.L_s * state_.i_source[k] * state_.i_source[k];
        e += rectifier_.stored_energy(state_.rectifier, params_);
        if (passive_enabled())
            for (std::size_t j = 0; j < branches_.size(); ++j)
                e += branches_[j].stored_energy(state_.passive[j]);
        if (vsc_enabled()) {
            for (int k = 0; k < 3; ++k)
                e += 0.5 * params_.L_f * state_.i_vsc[k] * state_.i_vsc[k];
            e += 0.5 * params_.C_dc * state_.v_dc * state_.v_dc;
        }
        return e;
    }

    const DcBusController& dc_bus() const noexcept { return dc_bus_; }
    const PassiveBranch& branch(std::size_t j) const { return branches_.at(j); }
    const Rectifier& rectifier() const noexcept { return rectifier_; }

private:
    void run_control(StepOutputs& o) {
        const PhaseTriple v_sense = ctrl_.voltage_sense == VoltageSense::Source ? o.v_source : o.v_pcc;
        const PhaseTriple i_meas =
            ctrl_.reference_input == ReferenceInput::Load ? o.i_load : o.i_load + o.i_passive;
        const AlphaBeta e = clarke_forward(v_sense);
        o.load_pq = load_power(e, clarke_forward(i_meas));
        const PowerSplit split = separator_.separate(o.load_pq);
        o.p_ave = dc_bus_.regulate(state_.v_dc, params_.dt);

        PhaseTriple ref;
        if (e.norm_sq() >= eps_sing_ && e.norm_sq() > 0.0)
            ref = -compensation_reference(e, split, o.load_pq.q, o.p_ave, eps_sing_).i;
        o.i_vsc_ref = ref;
        o.i_vsc_at_ref = state_.i_vsc;

        const SwitchCommand next = update(band_, state_.i_vsc, ref, state_.command);
        o.switch_transitions = transitions(next, state_.command);
        state_.command = next;
    }

    CircuitParams params_;
    Mode mode_;
    ControllerParams ctrl_;
    Rectifier rectifier_;
    std::array<PassiveBranch, 3> branches_;
    PowerSeparator separator_;
    DcBusController dc_bus_;
    HysteresisBand band_;
    double eps_sing_;
    double source_scale_ = 1.0;
    SimState state_;
    StepOutputs out_;
    std::uint64_t n_steps_ = 0;
};

} // namespace hapf
