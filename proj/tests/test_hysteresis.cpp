#include <catch_amalgamated.hpp>

#include <random>

#include "hapf/hysteresis.hpp"

using namespace hapf;

namespace {

SwitchCommand all(LegState s) { return {{s, s, s}}; }

} // namespace

TEST_CASE("comparator examples", "[hysteresis]") {
    const HysteresisBand band(0.5);
    const PhaseTriple ref{10.0, 10.0, 10.0};

    CHECK(update(band, {10.6, 10.0, 10.0}, ref, all(LegState::High)).leg[0] == LegState::Low);
    CHECK(update(band, {9.3, 10.0, 10.0}, ref, all(LegState::Low)).leg[0] == LegState::High);
    CHECK(update(band, {10.2, 10.0, 10.0}, ref, all(LegState::High)).leg[0] == LegState::High);
}

TEST_CASE("band edges hold the previous state", "[hysteresis]") {
    const HysteresisBand band(0.5);
    for (LegState prev : {LegState::Low, LegState::High}) {
        CHECK(update(band, {0.5, -0.5, 0.0}, {0, 0, 0}, all(prev)) == all(prev));
    }
}

TEST_CASE("phases switch independently", "[hysteresis]") {
    const HysteresisBand band(0.5);
    const SwitchCommand next = update(band, {1.0, -1.0, 0.0}, {0, 0, 0}, all(LegState::High));
    CHECK(next.leg[0] == LegState::Low);
    CHECK(next.leg[1] == LegState::High);
    CHECK(next.leg[2] == LegState::High);
    CHECK(transitions(next, all(LegState::High)) == 1);
    CHECK(next.sign(0) == -1);
    CHECK(next.sign(1) == 1);
}

TEST_CASE("non-positive band is rejected", "[hysteresis]") {
    CHECK_THROWS_AS(HysteresisBand(0.0), std::invalid_argument);
    CHECK_THROWS_AS(HysteresisBand(-0.1), std::invalid_argument);
}

TEST_CASE("hold property on random in-band errors", "[hysteresis][property]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5), ref(-30.0, 30.0);
    std::bernoulli_distribution coin;
    const HysteresisBand band(0.5);
    for (int n = 0; n < 1000; ++n) {
        SwitchCommand prev;
        for (auto& l : prev.leg)
            l = coin(rng) ? LegState::High : LegState::Low;
        const PhaseTriple r{ref(rng), ref(rng), ref(rng)};
        const PhaseTriple i{r.r + u(rng), r.y + u(rng), r.b + u(rng)};
        REQUIRE(update(band, i, r, prev) == prev);
    }
}

TEST_CASE("output is a monotone non-increasing step in the error", "[hysteresis][property]") {
    const HysteresisBand band(0.5);
    for (LegState prev : {LegState::Low, LegState::High}) {
        int last = 2;
        for (double err = -2.0; err <= 2.0; err += 0.01) {
            const int s = update(band, {err, 0, 0}, {0, 0, 0}, all(prev)).sign(0);
            CHECK(s <= last);
            last = s;
        }
    }
}
