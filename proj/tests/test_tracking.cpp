#include "dqkd/tracking.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

using namespace dqkd;

namespace {

// |E/X| of a PI loop around an integrating actuator, evaluated on the unit circle.
double error_gain(const LoopGains& g, double freq, double rate) {
    const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * freq / rate);
    const auto zm1 = z - 1.0;
    return std::abs(zm1 * zm1 / (zm1 * zm1 + g.kp * zm1 + g.ki * z));
}

TrackingConfig open_loop(TrackingConfig cfg) {
    cfg.coarse = {};
    cfg.fine = {};
    return cfg;
}

} // namespace

TEST_CASE("loop fixed point") {
    CoarseState c({0.3, 0.01});
    FineState f({0.4, 0.02});
    for (int i = 0; i < 100; ++i) {
        const auto r = step_coarse(c, {0.0, 0.0});
        CHECK(r.x == 0.0);
        CHECK(r.y == 0.0);
        const auto e = step_fine(f, r);
        CHECK(e.x == 0.0);
        CHECK(e.y == 0.0);
    }
}

TEST_CASE("proportional loop decays geometrically on a step") {
    const double d = 7.5;
    for (double k : {0.1, 0.3, 0.7, 0.95}) {
        CoarseState c({k, 0.0});
        for (int n = 0; n < 40; ++n) {
            const auto r = step_coarse(c, {d, -d});
            CHECK(r.x == doctest::Approx(d * std::pow(1 - k, n)).epsilon(1e-9));
            CHECK(r.y == doctest::Approx(-d * std::pow(1 - k, n)).epsilon(1e-9));
        }
    }
}

TEST_CASE("sinusoid residual follows the error transfer function") {
    const double rate = 10'000.0;
    for (const LoopGains g : {LoopGains{0.3, 0.01}, LoopGains{0.4, 0.02}}) {
        for (double f : {150.0, 400.0, 1500.0}) {
            PiLoop loop(g);
            const int settle = 20000, n = 50000;
            double s2 = 0;
            for (int i = 0; i < settle + n; ++i) {
                const double x = std::sin(2 * std::numbers::pi * f * i / rate);
                const double e = loop.step(x);
                if (i >= settle) s2 += e * e;
            }
            const double amplitude = std::sqrt(2 * s2 / n);
            CHECK(amplitude == doctest::Approx(error_gain(g, f, rate)).epsilon(0.10));
        }
    }
}

TEST_CASE("disabled loop passes the disturbance through") {
    FineState f({0.0, 0.0});
    RandomStream rng(3);
    double s2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = 2.0 * rng.normal();
        const auto e = step_fine(f, {x, 0.0});
        CHECK(e.x == x);
        s2 += e.x * e.x;
    }
    CHECK(std::sqrt(s2 / n) == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("closed loop beats open loop on the same disturbance") {
    for (const auto& preset : {drone_tracking_preset(), ground_tracking_preset()}) {
        const auto closed = rms(run_tracking(preset, 5.0, 21));
        const auto open = rms(run_tracking(open_loop(preset), 5.0, 21));
        CHECK(closed.sigma_x < open.sigma_x);
        CHECK(closed.sigma_y < open.sigma_y);
    }
}

TEST_CASE("run_tracking length and determinism") {
    const auto cfg = drone_tracking_preset();
    CHECK(run_tracking(cfg, 0.001, 1).size() == 10);
    const auto a = run_tracking(cfg, 0.5, 9);
    const auto b = run_tracking(cfg, 0.5, 9);
    CHECK(a.error_x == b.error_x);
    CHECK(a.error_y == b.error_y);
    CHECK(a.coupling == b.coupling);
    CHECK_THROWS_AS(run_tracking(cfg, 0.0, 1), DomainError);
    for (double c : a.coupling) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("calibrated presets reproduce the reported residuals within 50%") {
    const auto drone = rms(run_tracking(drone_tracking_preset(), 20.0, 11));
    CHECK(drone.sigma_x == doctest::Approx(3.97).epsilon(0.5));
    CHECK(drone.sigma_y == doctest::Approx(3.33).epsilon(0.5));
    const auto ground = rms(run_tracking(ground_tracking_preset(), 20.0, 12));
    CHECK(ground.sigma_x == doctest::Approx(1.30).epsilon(0.5));
    CHECK(ground.sigma_y == doctest::Approx(2.01).epsilon(0.5));
}

TEST_CASE("calibration hits a requested residual") {
    TrackingConfig cfg = ground_tracking_preset();
    const auto tuned = calibrate_disturbance(cfg, {1.0, 0.5}, 2.0, 5);
    const auto r = rms(run_tracking(tuned, 2.0, 5));
    CHECK(r.sigma_x == doctest::Approx(1.0).epsilon(0.01));
    CHECK(r.sigma_y == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("rms examples") {
    PointingSeries s;
    for (int i = 0; i < 10; ++i) {
        s.timestamps.push_back(i);
        s.error_x.push_back(2.5);
        s.error_y.push_back(i % 2 ? 1.5 : -1.5);
        s.coupling.push_back(1.0);
    }
    const auto r = rms(s);
    CHECK(r.sigma_x == doctest::Approx(2.5));
    CHECK(r.sigma_y == doctest::Approx(1.5));

    PointingSeries g;
    RandomStream rng(12);
    for (int i = 0; i < 100000; ++i) {
        g.timestamps.push_back(i);
        g.error_x.push_back(rng.normal());
        g.error_y.push_back(rng.normal());
        g.coupling.push_back(1.0);
    }
    const auto rg = rms(g);
    CHECK(std::abs(rg.sigma_x - 1.0) <= 0.01);
    CHECK(std::abs(rg.sigma_y - 1.0) <= 0.01);
    CHECK_THROWS_AS(rms(PointingSeries{}), DomainError);
}

TEST_CASE("coupling efficiency") {
    CHECK(coupling_efficiency(0.0, 2.5) == 1.0);
    CHECK(coupling_efficiency(2.5, 2.5) == doctest::Approx(std::exp(-1.0)));
    CHECK(coupling_efficiency(3.97, 2.5) == doctest::Approx(0.0803).epsilon(2e-3));
    CHECK_THROWS_AS(coupling_efficiency(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(coupling_efficiency(1.0, -1.0), DomainError);
    double prev = 1.0;
    for (int i = 1; i < 1000; ++i) {
        const double c = coupling_efficiency(i * 0.01, 2.5);
        CHECK(c < prev);
        prev = c;
    }
}

TEST_CASE("stability region and divergence detection") {
    CHECK(gains_stable({0.3, 0.01}));
    CHECK(gains_stable({0.4, 0.02}));
    CHECK(gains_stable({1.5, 0.0}));
    CHECK_FALSE(gains_stable({2.5, 0.0}));
    CHECK_FALSE(gains_stable({1.9, 0.3}));
    CHECK_FALSE(gains_stable({0.0, 0.1}));

    TrackingConfig bad = drone_tracking_preset();
    bad.fine = {2.5, 0.0};
    bad.coarse = {2.5, 0.0};
    CHECK_THROWS_AS(run_tracking(bad, 2.0, 1), TrackingError);
}

TEST_CASE("closed loop stays bounded for every stable preset gain") {
    for (const auto& cfg : {drone_tracking_preset(), ground_tracking_preset()}) {
        REQUIRE(gains_stable(cfg.coarse));
        REQUIRE(gains_stable(cfg.fine));
        const auto s = run_tracking(cfg, 10.0, 77);
        double worst = 0;
        for (std::size_t i = 0; i < s.size(); ++i) worst = std::max({worst, std::abs(s.error_x[i]), std::abs(s.error_y[i])});
        CHECK(worst < cfg.divergence_limit_um);
    }
}

TEST_CASE("configuration validation") {
    TrackingConfig c;
    c.loop_rate_fine = 100;
    c.loop_rate_coarse = 200;
    CHECK_THROWS_AS(validate_tracking(c), ValidationError);
    c = TrackingConfig{};
    c.mode_field_radius_um = 0;
    CHECK_THROWS_AS(validate_tracking(c), ValidationError);
    c = TrackingConfig{};
    c.disturbance_x.sinusoids.assign(5, {1.0, 10.0});
    CHECK_THROWS_AS(validate_tracking(c), ValidationError);
}

TEST_CASE("series CSV") {
    std::ostringstream os;
    write_series_csv(os, run_tracking(ground_tracking_preset(), 0.0005, 1));
    const auto text = os.str();
    CHECK(text.rfind("t_s,err_x_um,err_y_um,coupling\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}
