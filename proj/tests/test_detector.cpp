#include "dqkd/detector.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace dqkd;

namespace {

ArrivalEvent arrival(PolarizationState s, std::uint32_t photons, std::uint32_t flipped = 0) {
    ArrivalEvent a;
    a.gate_index = 17;
    a.arrival_time = 1e-6;
    a.state = s;
    a.surviving_photons = photons;
    a.flipped_photons = flipped;
    return a;
}

const ReceiverClock kIdealClock{0.0, 0.0};

bool within_sigma(double observed, double n, double p) {
    return std::abs(observed - n * p) <= 3 * std::sqrt(n * p * (1 - p));
}

} // namespace

TEST_CASE("eigenstate projection never lands on the orthogonal detector") {
    DetectorConfig cfg;
    RandomStream rng(1);
    int h = 0;
    for (int i = 0; i < 10'000; ++i) {
        for (const auto& ev : detect(arrival(PolarizationState::H, 1), cfg, kIdealClock, rng)) {
            CHECK(ev.detector != PolarizationState::V);
            h += ev.detector == PolarizationState::H;
        }
    }
    CHECK(within_sigma(h, 10'000, 0.5));
}

TEST_CASE("mismatched basis splits evenly and basis choice is fair") {
    DetectorConfig cfg;
    RandomStream rng(2);
    double d = 0, a = 0, rect = 0, diag = 0;
    for (int i = 0; i < 200'000; ++i) {
        const auto ev = detect(arrival(PolarizationState::H, 1), cfg, kIdealClock, rng);
        REQUIRE(ev.size() == 1);
        switch (ev[0].detector) {
        case PolarizationState::D: ++d; ++diag; break;
        case PolarizationState::A: ++a; ++diag; break;
        default: ++rect;
        }
    }
    CHECK(d + a > 1e5 / 2);
    CHECK(within_sigma(d, d + a, 0.5));
    CHECK(within_sigma(rect, rect + diag, 0.5));
}

TEST_CASE("flipped photons land on the orthogonal detector") {
    DetectorConfig cfg;
    RandomStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        for (const auto& ev : detect(arrival(PolarizationState::A, 1, 1), cfg, kIdealClock, rng)) {
            CHECK(ev.detector != PolarizationState::A);
        }
    }
}

TEST_CASE("multi-click flag") {
    DetectorConfig cfg;
    RandomStream rng(4);
    int seen = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto ev = detect(arrival(PolarizationState::H, 2), cfg, kIdealClock, rng);
        if (ev.size() == 2) {
            ++seen;
            CHECK(ev[0].detector != ev[1].detector);
            CHECK(ev[0].multi_click);
            CHECK(ev[1].multi_click);
        } else {
            REQUIRE(ev.size() == 1);
            CHECK_FALSE(ev[0].multi_click);
        }
    }
    CHECK(seen > 0);
}

TEST_CASE("efficiency thins clicks and timestamps are quantized") {
    DetectorConfig cfg;
    cfg.efficiency = 0.25;
    cfg.tdc_resolution = 4e-12;
    RandomStream rng(5);
    const ReceiverClock clock{1.3e-9, 2e-7};
    int clicks = 0;
    auto a = arrival(PolarizationState::D, 1);
    a.arrival_time = 0.123456789;
    for (int i = 0; i < 100'000; ++i) {
        const auto ev = detect(a, cfg, clock, rng);
        clicks += static_cast<int>(ev.size());
        for (const auto& e : ev) {
            CHECK(e.raw_timestamp == static_cast<std::uint64_t>(std::llround(clock.to_local(a.arrival_time) / 4e-12)));
            CHECK(e.oracle.true_gate == 17);
        }
    }
    CHECK(within_sigma(clicks, 100'000, 0.25));
}

TEST_CASE("dark counts") {
    DetectorConfig cfg;
    RandomStream rng(6);
    cfg.dark_rate = 0;
    CHECK(dark_counts(rng, cfg, 0, 10).empty());
    cfg.dark_rate = 100;
    const auto ev = dark_counts(rng, cfg, 0, 10);
    CHECK(std::abs(static_cast<double>(ev.size()) - 4000.0) <= 3 * std::sqrt(4000.0));
    for (const auto& e : ev) CHECK(e.dark_origin());

    cfg.dark_rate = 10'000;
    const auto many = dark_counts(rng, cfg, 0, 10);
    std::array<double, 4> per{};
    for (const auto& e : many) per[static_cast<std::size_t>(e.detector)] += 1;
    const double exp = many.size() / 4.0;
    double chi2 = 0;
    for (double c : per) chi2 += (c - exp) * (c - exp) / exp;
    CHECK(chi2 < 16.27);
}

TEST_CASE("gate filter") {
    DetectorConfig cfg;
    const ClockModel clock{0.0, 0.0, 20e-9, 0.0, 0};
    DetectionEvent centre;
    centre.raw_timestamp = 20'000 * 5; // gate 5 centre in ps ticks
    CHECK(gate_filter(std::span(&centre, 1), clock, 500e-12, cfg).size() == 1);
    CHECK_THROWS_AS(gate_filter(std::span(&centre, 1), std::nullopt, 500e-12, cfg), SyncError);

    RandomStream rng(7);
    std::vector<DetectionEvent> uniform(400'000);
    for (auto& e : uniform) e.raw_timestamp = rng.uniform_int(1'000'000'000);
    const auto kept = gate_filter(uniform, clock, 500e-12, cfg);
    CHECK(within_sigma(kept.size(), uniform.size(), 0.025));
    CHECK(gate_filter(uniform, clock, 20e-9, cfg).size() == uniform.size());
}

TEST_CASE("dead time") {
    DetectorConfig cfg;
    cfg.dead_time = 50e-9;
    std::vector<DetectionEvent> ev(4);
    ev[0].raw_timestamp = 1000;
    ev[1].raw_timestamp = 1000 + 49'999;
    ev[2].raw_timestamp = 1000 + 50'000;
    ev[3].raw_timestamp = 1200;
    ev[3].detector = PolarizationState::V;
    finalize_stream(ev, cfg);
    REQUIRE(ev.size() == 3);
    CHECK(ev[0].raw_timestamp == 1000);
    CHECK(ev[1].raw_timestamp == 1200);
    CHECK(ev[2].raw_timestamp == 51'000);
}

TEST_CASE("dead time monotonicity and per-detector ordering") {
    RandomStream rng(8);
    DetectorConfig base;
    base.dark_rate = 2e6;
    const auto raw = dark_counts(rng, base, 0, 1e-3);
    std::size_t prev = raw.size() + 1;
    for (double dt : {0.0, 10e-9, 50e-9, 100e-9, 400e-9, 1e-6}) {
        auto ev = raw;
        DetectorConfig cfg = base;
        cfg.dead_time = dt;
        finalize_stream(ev, cfg);
        CHECK(ev.size() <= prev);
        prev = ev.size();
        std::array<std::uint64_t, 4> last{};
        for (const auto& e : ev) {
            const auto d = static_cast<std::size_t>(e.detector);
            CHECK(e.raw_timestamp >= last[d]);
            last[d] = e.raw_timestamp;
        }
    }
}

TEST_CASE("oracle tags never influence filtering") {
    RandomStream rng(9);
    DetectorConfig cfg;
    cfg.dark_rate = 1e6;
    const ClockModel clock{0.0, 0.0, 20e-9, 0.0, 0};
    auto tagged = dark_counts(rng, cfg, 0, 2e-3);
    for (std::size_t i = 0; i < tagged.size(); i += 3) tagged[i].oracle = {EventOrigin::Signal, i};
    auto stripped = tagged;
    for (auto& e : stripped) e.oracle = {};
    finalize_stream(tagged, cfg);
    finalize_stream(stripped, cfg);
    const auto a = gate_filter(tagged, clock, 500e-12, cfg);
    const auto b = gate_filter(stripped, clock, 500e-12, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].raw_timestamp == b[i].raw_timestamp);
        CHECK(a[i].detector == b[i].detector);
        CHECK(a[i].multi_click == b[i].multi_click);
    }
}

TEST_CASE("event dump round trip") {
    std::vector<DetectionEvent> ev(3);
    ev[0].raw_timestamp = 0x0102030405060708ULL;
    ev[1].raw_timestamp = 42;
    ev[1].detector = PolarizationState::A;
    ev[1].multi_click = true;
    ev[2].raw_timestamp = ~0ULL;
    ev[2].detector = PolarizationState::D;
    std::stringstream ss;
    write_event_dump(ss, ev);
    const auto bytes = ss.str();
    REQUIRE(bytes.size() == 30);
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x08);
    CHECK(static_cast<unsigned char>(bytes[7]) == 0x01);
    CHECK(bytes[18] == 3);
    CHECK(bytes[19] == 1);
    const auto back = read_event_dump(ss);
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[i].raw_timestamp == ev[i].raw_timestamp);
        CHECK(back[i].detector == ev[i].detector);
        CHECK(back[i].multi_click == ev[i].multi_click);
    }
    std::stringstream truncated(bytes.substr(0, 25));
    CHECK_THROWS_AS(read_event_dump(truncated), DomainError);
}

TEST_CASE("detector validation") {
    DetectorConfig cfg;
    LinkBudget budget;
    cfg.efficiency = 0.5;
    CHECK_THROWS_AS(validate_detector(cfg, budget), ValidationError);
    budget.detection_loss_db = 0;
    CHECK_NOTHROW(validate_detector(cfg, budget));
    cfg.tdc_resolution = 0;
    CHECK_THROWS_AS(validate_detector(cfg, budget), ValidationError);
}
