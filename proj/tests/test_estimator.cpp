#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "hapf/estimator.hpp"

using namespace hapf;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

PhaseTriple balanced(double amp, double w, double t, double phi) {
    return {amp * std::sin(w * t + phi), amp * std::sin(w * t + phi - 2 * kPi / 3),
            amp * std::sin(w * t + phi + 2 * kPi / 3)};
}

} // namespace

TEST_CASE("load_power examples", "[estimator]") {
    const PowerPair a = load_power({1, 0}, {0, 0});
    CHECK(a.p == 0.0);
    CHECK(a.q == 0.0);
    const PowerPair b = load_power({2, 1}, {3, -1});
    CHECK(b.p == 5.0);
    CHECK(b.q == -5.0);
    const PowerPair c = load_power({1, 1}, {1, 1});
    CHECK(c.p == 2.0);
    CHECK(c.q == 0.0);
}

TEST_CASE("period window length", "[estimator]") {
    CHECK(period_samples(50.0, 2e-6) == 10000);
    CHECK(period_samples(60.0, 1e-5) == 1667);
}

TEST_CASE("constant power has no oscillating part", "[estimator]") {
    PowerSeparator sep(200);
    PowerSplit s;
    for (int n = 0; n < 400; ++n)
        s = sep.separate({100.0, -40.0});
    CHECK(s.p_avg == 100.0);
    CHECK(s.p_osc == 0.0);
    CHECK(s.q_avg == -40.0);
    CHECK(s.q_osc == 0.0);
}

TEST_CASE("300 Hz ripple averages out over one 20 ms window", "[estimator]") {
    const double dt = 2e-6;
    const std::size_t window = period_samples(50.0, dt);
    PowerSeparator sep(window);
    const double w = 2 * kPi * 300.0;
    for (std::size_t n = 0; n < 3 * window; ++n) {
        const double t = static_cast<double>(n) * dt;
        const double ripple = 30.0 * std::sin(w * t);
        const PowerSplit s = sep.separate({100.0 + ripple, ripple});
        if (n + 1 < window)
            continue;
        REQUIRE_THAT(s.p_avg, WithinAbs(100.0, 1e-6));
        REQUIRE_THAT(s.p_osc, WithinAbs(ripple, 1e-6));
        REQUIRE_THAT(s.q_avg, WithinAbs(0.0, 1e-6));
    }
}

TEST_CASE("partial window reports the mean of samples seen so far", "[estimator]") {
    MovingAverage m(4);
    CHECK(m.mean() == 0.0);
    CHECK(m.push(2.0) == 2.0);
    CHECK(m.push(4.0) == 3.0);
    CHECK(!m.filled());
    m.push(6.0);
    CHECK(m.push(8.0) == 5.0);
    CHECK(m.filled());
    CHECK(m.push(10.0) == 7.0);
    CHECK_THROWS_AS(MovingAverage(0), std::invalid_argument);
}

TEST_CASE("split reconstructs the input exactly", "[estimator][property]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5e3, 5e3);
    PowerSeparator sep(50);
    for (int n = 0; n < 500; ++n) {
        const PowerPair in{u(rng), u(rng)};
        const PowerSplit s = sep.separate(in);
        REQUIRE_THAT(s.p_avg + s.p_osc, WithinRel(in.p, 1e-12));
        REQUIRE_THAT(s.q_avg + s.q_osc, WithinRel(in.q, 1e-12));
    }
}

TEST_CASE("running mean does not drift over long runs", "[estimator][property]") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(1e4, 1e4 + 1.0);
    MovingAverage m(1000);
    for (int n = 0; n < 200000; ++n) {
        m.push(u(rng));
        if (n % 9973 == 0 && m.filled())
            REQUIRE_THAT(m.mean(), WithinRel(m.exact_mean(), 1e-9));
    }
    CHECK_THAT(m.mean(), WithinRel(m.exact_mean(), 1e-9));
}

TEST_CASE("nothing to compensate for an in-phase fundamental load", "[estimator]") {
    const double dt = 1e-5, w = 2 * kPi * 50.0;
    const std::size_t window = period_samples(50.0, dt);
    PowerSeparator sep(window);
    const double rated = 10.0;
    for (std::size_t n = 0; n < 3 * window; ++n) {
        const double t = static_cast<double>(n) * dt;
        const AlphaBeta e = clarke_forward(balanced(311.127, w, t, 0.0));
        const PowerPair pq = load_power(e, clarke_forward(balanced(rated, w, t, 0.0)));
        const PowerSplit split = sep.separate(pq);
        if (n < window)
            continue;
        const PhaseTriple ref = compensation_reference(e, split, pq.q, 0.0).i;
        for (int k = 0; k < 3; ++k)
            REQUIRE_THAT(ref[k], WithinAbs(0.0, 1e-6 * rated));
    }
}

TEST_CASE("pure reactive demand maps through K^-1 and H^T", "[estimator]") {
    const PowerSplit split{};
    const AlphaBeta ab = compensation_reference_ab({1, 0}, split, 1.0, 0.0, 1e-12);
    CHECK_THAT(ab.a, WithinAbs(0.0, 1e-15));
    CHECK_THAT(ab.b, WithinAbs(-1.0, 1e-15));
    const PhaseTriple i = compensation_reference({1, 0}, split, 1.0, 0.0, 1e-12).i;
    // column two of H^T scaled by -1: sqrt(2/3) * (0, -sqrt(3)/2, +sqrt(3)/2)
    CHECK_THAT(i.r, WithinAbs(0.0, 1e-15));
    CHECK_THAT(i.y, WithinAbs(-std::sqrt(0.5), 1e-12));
    CHECK_THAT(i.b, WithinAbs(std::sqrt(0.5), 1e-12));
}

TEST_CASE("loss power alone yields a reference carrying exactly that power", "[estimator][property]") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-400.0, 400.0), pw(-2e3, 2e3);
    for (int n = 0; n < 200; ++n) {
        const AlphaBeta e{u(rng), u(rng)};
        if (e.norm_sq() < kDefaultSingularThreshold)
            continue;
        const double P = pw(rng);
        const PowerPair s = instantaneous_power(e, compensation_reference_ab(e, {}, 0.0, P));
        REQUIRE_THAT(s.p, WithinAbs(P, 1e-9 * std::abs(P) + 1e-12));
        REQUIRE_THAT(s.q, WithinAbs(0.0, 1e-9 * std::abs(P) + 1e-12));
    }
}

TEST_CASE("compensated source power is the average load power plus loss power", "[estimator][property]") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> amp(0.0, 1.0), ph(0.0, 2 * kPi), pave(-500.0, 500.0);
    const double dt = 1e-4, w = 2 * kPi * 50.0;
    const std::size_t window = period_samples(50.0, dt);
    for (int trial = 0; trial < 20; ++trial) {
        const double e1 = 200.0 + 200.0 * amp(rng), e_phi = ph(rng), e5 = 20.0 * amp(rng);
        double i_amp[4], i_phi[4];
        const int orders[4] = {1, 5, 7, 11};
        for (int j = 0; j < 4; ++j) {
            i_amp[j] = (j == 0 ? 20.0 : 5.0) * amp(rng);
            i_phi[j] = ph(rng);
        }
        const double p_ave = pave(rng);
        PowerSeparator sep(window);
        for (std::size_t n = 0; n < 2 * window; ++n) {
            const double t = static_cast<double>(n) * dt;
            const PhaseTriple ev = balanced(e1, w, t, e_phi) + balanced(e5, -5 * w, t, 0.3);
            PhaseTriple il{};
            for (int j = 0; j < 4; ++j)
                il = il + balanced(i_amp[j], orders[j] * w, t, i_phi[j]);
            const AlphaBeta e = clarke_forward(ev);
            const AlphaBeta i_l = clarke_forward(il);
            const PowerPair pq = load_power(e, i_l);
            const PowerSplit split = sep.separate(pq);
            if (n < window)
                continue;
            const AlphaBeta ref = compensation_reference_ab(e, split, pq.q, p_ave);
            const PhaseTriple ref_abc = compensation_reference(e, split, pq.q, p_ave).i;
            const PowerPair s = instantaneous_power(e, {i_l.a + ref.a, i_l.b + ref.b});
            const double scale = std::abs(pq.p) + std::abs(pq.q) + std::abs(p_ave) + 1.0;
            REQUIRE_THAT(s.p, WithinAbs(split.p_avg + p_ave, 1e-9 * scale));
            REQUIRE_THAT(s.q, WithinAbs(0.0, 1e-9 * scale));
            REQUIRE_THAT(ref_abc.sum(), WithinAbs(0.0, 1e-9 * (std::abs(ref_abc.r) + 1.0)));

            // doubling e halves the reference for fixed powers
            const AlphaBeta ref2 = compensation_reference_ab({2 * e.a, 2 * e.b}, split, pq.q, p_ave);
            REQUIRE_THAT(ref2.a, WithinAbs(ref.a / 2, 1e-9 * (std::abs(ref.a) + 1.0)));
            REQUIRE_THAT(ref2.b, WithinAbs(ref.b / 2, 1e-9 * (std::abs(ref.b) + 1.0)));
        }
    }
}

TEST_CASE("singular voltage propagates from the reference", "[estimator]") {
    CHECK_THROWS_AS(compensation_reference({0, 0}, {}, 1.0, 0.0), SingularVoltageError);
}
