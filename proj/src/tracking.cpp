#include "dqkd/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace dqkd {

void validate_tracking(const TrackingConfig& cfg) {
    if (!(cfg.loop_rate_coarse > 0.0)) throw ValidationError("loop_rate_coarse", "must be > 0");
    if (!(cfg.loop_rate_fine > 0.0)) throw ValidationError("loop_rate_fine", "must be > 0");
    if (cfg.loop_rate_fine < cfg.loop_rate_coarse) {
        throw ValidationError("loop_rate_fine", "must be >= loop_rate_coarse");
    }
    if (!(cfg.mode_field_radius_um > 0.0)) {
        throw ValidationError("mode_field_radius_um", "must be > 0");
    }
    if (!(cfg.fine_fov_um > 0.0)) throw ValidationError("fine_fov_um", "must be > 0");
    for (const auto* d : {&cfg.disturbance_x, &cfg.disturbance_y}) {
        if (d->white_sigma_um < 0.0) throw ValidationError("white_sigma_um", "must be >= 0");
        if (d->sinusoids.size() > 4) throw ValidationError("sinusoids", "at most 4 lines");
    }
}

bool gains_stable(const LoopGains& g) noexcept {
    if (!(g.kp > 0.0 && g.kp < 2.0)) return false;
    if (g.ki == 0.0) return true;
    // Jury conditions for z^2 + a1 z + a0.
    return g.ki > 0.0 && 4.0 - 2.0 * g.kp - g.ki > 0.0;
}

double PiLoop::step(double input) noexcept {
    const double err = input - correction_;
    integral_ += err;
    correction_ += gains_.kp * err + gains_.ki * integral_;
    return err;
}

Offset2 step_coarse(CoarseState& state, Offset2 disturbance) noexcept {
    return {state.x.step(disturbance.x), state.y.step(disturbance.y)};
}

Offset2 step_fine(FineState& state, Offset2 coarse_residual) noexcept {
    return {state.x.step(coarse_residual.x), state.y.step(coarse_residual.y)};
}

double coupling_efficiency(double offset_um, double mode_field_radius_um) {
    if (!(mode_field_radius_um > 0.0)) {
        throw DomainError("coupling_efficiency: mode field radius must be > 0");
    }
    if (offset_um < 0.0) throw DomainError("coupling_efficiency: negative offset");
    const double r = offset_um / mode_field_radius_um;
    return std::exp(-r * r);
}

void PointingSeries::reserve(std::size_t n) {
    timestamps.reserve(n);
    error_x.reserve(n);
    error_y.reserve(n);
    coupling.reserve(n);
}

Tracker::Tracker(const TrackingConfig& cfg, std::uint64_t seed)
    : Tracker(cfg, RandomStream(seed).derive("tracking")) {}

Tracker::Tracker(const TrackingConfig& cfg, RandomStream rng)
    : cfg_(cfg), rng_(rng), coarse_(cfg.coarse), fine_(cfg.fine) {
    validate_tracking(cfg_);
    coarse_every_ = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(cfg_.loop_rate_fine / cfg_.loop_rate_coarse)));
    for (const auto& s : cfg_.disturbance_x.sinusoids) {
        (void)s;
        phases_x_.push_back(2.0 * std::numbers::pi * rng_.uniform());
    }
    for (const auto& s : cfg_.disturbance_y.sinusoids) {
        (void)s;
        phases_y_.push_back(2.0 * std::numbers::pi * rng_.uniform());
    }
    const bool loops_enabled = cfg_.coarse.kp != 0.0 || cfg_.coarse.ki != 0.0 ||
                               cfg_.fine.kp != 0.0 || cfg_.fine.ki != 0.0;
    scale_limit_ = loops_enabled ? cfg_.divergence_limit_um : INFINITY;
}

double Tracker::sinusoids(const AxisDisturbance& d, const std::vector<double>& phases,
                          double t) const {
    double v = 0.0;
    for (std::size_t i = 0; i < d.sinusoids.size(); ++i) {
        const auto& s = d.sinusoids[i];
        v += s.amplitude_um * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t + phases[i]);
    }
    return v;
}

PointingSample Tracker::step() {
    PointingSample out;
    out.t = static_cast<double>(step_) / cfg_.loop_rate_fine;

    walk_x_ += cfg_.disturbance_x.white_sigma_um * rng_.normal();
    walk_y_ += cfg_.disturbance_y.white_sigma_um * rng_.normal();
    const Offset2 d{walk_x_ + sinusoids(cfg_.disturbance_x, phases_x_, out.t),
                    walk_y_ + sinusoids(cfg_.disturbance_y, phases_y_, out.t)};

    Offset2 residual;
    if (step_ % coarse_every_ == 0) {
        residual = step_coarse(coarse_, d);
    } else {
        residual = {coarse_.x.residual(d.x), coarse_.y.residual(d.y)};
    }

    Offset2 err;
    if (std::hypot(residual.x, residual.y) > cfg_.fine_fov_um) {
        // Fine lock lost: the mirror holds and the sample carries no coupling.
        err = {fine_.x.residual(residual.x), fine_.y.residual(residual.y)};
        out.lock_lost = true;
        out.coupling = 0.0;
    } else {
        err = step_fine(fine_, residual);
        out.coupling = coupling_efficiency(std::hypot(err.x, err.y), cfg_.mode_field_radius_um);
    }
    out.err_x = err.x;
    out.err_y = err.y;

    if (!(std::abs(err.x) <= scale_limit_ && std::abs(err.y) <= scale_limit_)) {
        throw TrackingError("tracking loop diverged at t=" + std::to_string(out.t) + " s");
    }
    ++step_;
    return out;
}

PointingSeries run_tracking(const TrackingConfig& cfg, double duration_s, std::uint64_t seed) {
    if (!(duration_s > 0.0)) throw DomainError("run_tracking: duration must be > 0");
    Tracker tracker(cfg, seed);
    const auto n = static_cast<std::size_t>(std::llround(duration_s * cfg.loop_rate_fine));
    PointingSeries series;
    series.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = tracker.step();
        series.timestamps.push_back(s.t);
        series.error_x.push_back(s.err_x);
        series.error_y.push_back(s.err_y);
        series.coupling.push_back(s.coupling);
        series.lock_lost_samples += s.lock_lost ? 1 : 0;
    }
    return series;
}

AxisRms rms(const PointingSeries& series) {
    if (series.size() == 0) throw DomainError("rms: empty series");
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        sx += series.error_x[i] * series.error_x[i];
        sy += series.error_y[i] * series.error_y[i];
    }
    const double n = static_cast<double>(series.size());
    return {std::sqrt(sx / n), std::sqrt(sy / n)};
}

TrackingConfig calibrate_disturbance(TrackingConfig cfg, AxisRms target, double duration_s,
                                     std::uint64_t seed) {
    auto measure = [&](double sx, double sy) {
        TrackingConfig trial = cfg;
        trial.disturbance_x.white_sigma_um = sx;
        trial.disturbance_y.white_sigma_um = sy;
        return rms(run_tracking(trial, duration_s, seed));
    };

    // Both axes are independent, so they are searched together.
    const double grid[] = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0};
    double lo_x = 0.0, hi_x = grid[std::size(grid) - 1];
    double lo_y = 0.0, hi_y = hi_x;
    bool found_x = false, found_y = false;
    for (double g : grid) {
        const auto r = measure(g, g);
        if (!found_x && r.sigma_x >= target.sigma_x) {
            hi_x = g;
            found_x = true;
        } else if (!found_x) {
            lo_x = g;
        }
        if (!found_y && r.sigma_y >= target.sigma_y) {
            hi_y = g;
            found_y = true;
        } else if (!found_y) {
            lo_y = g;
        }
    }
    for (int it = 0; it < 30; ++it) {
        const double mx = 0.5 * (lo_x + hi_x);
        const double my = 0.5 * (lo_y + hi_y);
        const auto r = measure(mx, my);
        (r.sigma_x < target.sigma_x ? lo_x : hi_x) = mx;
        (r.sigma_y < target.sigma_y ? lo_y : hi_y) = my;
    }
    cfg.disturbance_x.white_sigma_um = 0.5 * (lo_x + hi_x);
    cfg.disturbance_y.white_sigma_um = 0.5 * (lo_y + hi_y);
    return cfg;
}

void write_series_csv(std::ostream& os, const PointingSeries& series) {
    os << "t_s,err_x_um,err_y_um,coupling\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        os << series.timestamps[i] << ',' << series.error_x[i] << ',' << series.error_y[i] << ','
           << series.coupling[i] << '\n';
    }
}

TrackingConfig drone_tracking_preset() {
    TrackingConfig cfg;
    cfg.disturbance_x.white_sigma_um = 2.671875;
    cfg.disturbance_y.white_sigma_um = 2.25;
    cfg.disturbance_x.sinusoids = {{1.5, 85.0}, {0.6, 170.0}};
    cfg.disturbance_y.sinusoids = {{1.2, 85.0}, {0.5, 170.0}};
    return cfg;
}

TrackingConfig ground_tracking_preset() {
    TrackingConfig cfg;
    cfg.disturbance_x.white_sigma_um = 0.948776923;
    cfg.disturbance_y.white_sigma_um = 1.4584327;
    return cfg;
}

} // namespace dqkd
