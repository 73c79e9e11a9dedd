#include "dqkd/timesync.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace dqkd {

namespace {

constexpr int kPhaseBins = 64;
constexpr std::size_t kPhaseSamples = 4096;

double wrap_phase(double t, double period) {
    double r = std::fmod(t, period);
    if (r < 0.0) r += period;
    return r;
}

// Signed distance between two phases on a circle of the given circumference.
double phase_distance(double a, double b, double period) {
    double d = std::fmod(a - b, period);
    if (d > 0.5 * period) d -= period;
    if (d < -0.5 * period) d += period;
    return d;
}

double coarse_phase(std::span<const double> ts, double period) {
    const std::size_t n = std::min(ts.size(), kPhaseSamples);
    std::array<std::size_t, kPhaseBins> hist{};
    for (std::size_t i = 0; i < n; ++i) {
        const double r = wrap_phase(ts[i], period);
        auto bin = static_cast<int>(r / period * kPhaseBins);
        hist[static_cast<std::size_t>(std::clamp(bin, 0, kPhaseBins - 1))]++;
    }
    const auto peak = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());

    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = wrap_phase(ts[i], period);
        const int bin = std::clamp(static_cast<int>(r / period * kPhaseBins), 0, kPhaseBins - 1);
        const int d = std::abs(bin - peak);
        if (std::min(d, kPhaseBins - d) > 1) continue;
        const double angle = 2.0 * std::numbers::pi * r / period;
        s += std::sin(angle);
        c += std::cos(angle);
    }
    return wrap_phase(std::atan2(s, c) / (2.0 * std::numbers::pi) * period, period);
}

} // namespace

ClockModel recover_clock(std::span<const double> sync_timestamps, double nominal_period) {
    if (!(nominal_period > 0.0)) throw DomainError("recover_clock: nominal period must be > 0");
    if (sync_timestamps.size() < kMinSyncPulses) {
        throw SyncError("recover_clock: insufficient sync data (" +
                        std::to_string(sync_timestamps.size()) + " pulses, need " +
                        std::to_string(kMinSyncPulses) + ")");
    }
    std::vector<double> sorted;
    std::span<const double> ts = sync_timestamps;
    if (!std::is_sorted(ts.begin(), ts.end())) {
        sorted.assign(ts.begin(), ts.end());
        std::sort(sorted.begin(), sorted.end());
        ts = sorted;
    }

    const double period = nominal_period;
    const double tolerance = 0.25 * period;
    const double phase0 = coarse_phase(ts, period);

    std::vector<std::int64_t> ks;
    std::vector<double> kept;
    ks.reserve(ts.size());
    kept.reserve(ts.size());

    // Running regression of (t - t_first) on (k - k_first).
    double sum_k = 0.0, sum_t = 0.0, sum_kk = 0.0, sum_kt = 0.0;
    double period_est = period;
    double t_first = 0.0;
    std::int64_t k_first = 0;

    for (double t : ts) {
        std::int64_t k;
        if (ks.empty()) {
            if (std::abs(phase_distance(wrap_phase(t, period), phase0, period)) > tolerance) continue;
            k = static_cast<std::int64_t>(std::llround((t - phase0) / period));
            t_first = t;
            k_first = k;
        } else {
            const double dt = t - kept.back();
            const auto step = static_cast<std::int64_t>(std::llround(dt / period_est));
            if (step <= 0) continue;
            if (std::abs(dt - static_cast<double>(step) * period_est) > tolerance) continue;
            k = ks.back() + step;
        }
        ks.push_back(k);
        kept.push_back(t);

        const double dk = static_cast<double>(k - k_first);
        const double dt0 = t - t_first;
        sum_k += dk;
        sum_t += dt0;
        sum_kk += dk * dk;
        sum_kt += dk * dt0;
        const double n = static_cast<double>(ks.size());
        if (ks.size() >= 16) {
            const double den = n * sum_kk - sum_k * sum_k;
            if (den > 0.0) period_est = (n * sum_kt - sum_k * sum_t) / den;
        }
    }

    if (ks.size() < kMinSyncPulses) {
        throw SyncError("recover_clock: insufficient sync data after outlier rejection");
    }

    // Final centred least-squares line t = a + b (k - k_mean).
    const double n = static_cast<double>(ks.size());
    double k_mean = 0.0, t_mean = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        k_mean += static_cast<double>(ks[i] - k_first);
        t_mean += kept[i] - t_first;
    }
    k_mean /= n;
    t_mean /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double x = static_cast<double>(ks[i] - k_first) - k_mean;
        const double y = (kept[i] - t_first) - t_mean;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double x = static_cast<double>(ks[i] - k_first) - k_mean;
        const double r = (kept[i] - t_first) - t_mean - slope * x;
        ss += r * r;
    }

    ClockModel model;
    model.period = period;
    model.drift = slope / period - 1.0;
    model.fit_residual_rms = std::sqrt(ss / n);
    model.pulses_used = ks.size();
    // Time of receiver gate k = 0, reduced to [0, slope).
    const double t_at_k0 = t_first + t_mean - slope * (k_mean + static_cast<double>(k_first));
    model.offset = wrap_phase(t_at_k0, slope);

    if (!(std::abs(model.drift) < 1e-4)) {
        throw SyncError("recover_clock: lock failure (drift " + std::to_string(model.drift) + ")");
    }
    if (model.fit_residual_rms > period / 4.0) {
        throw SyncError("recover_clock: lock failure (residual rms exceeds period/4)");
    }
    return model;
}

GateAssignment assign_gate(double t, const ClockModel& clock) noexcept {
    const double p = clock.effective_period();
    const auto gate = static_cast<std::int64_t>(std::llround((t - clock.offset) / p));
    return {gate, t - (clock.offset + static_cast<double>(gate) * p)};
}

std::vector<GateAssignment> assign_gates(std::span<const double> timestamps,
                                         const ClockModel& clock) {
    std::vector<GateAssignment> out;
    out.reserve(timestamps.size());
    for (double t : timestamps) out.push_back(assign_gate(t, clock));
    return out;
}

std::int64_t resolve_gate_origin(const ClockModel& clock, double expected_gate0_time) noexcept {
    return std::llround((expected_gate0_time - clock.offset) / clock.effective_period());
}

} // namespace dqkd
