#pragma once

#include "dqkd/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dqkd {

struct SyncError : Error {
    using Error::Error;
};

/// Receiver-side model of the transmitter gate clock:
/// gate k arrives at offset + k * period * (1 + drift), offset in [0, effective period).
struct ClockModel {
    double offset = 0.0;
    double drift = 0.0;
    double period = 0.0; // nominal
    double fit_residual_rms = 0.0;
    std::size_t pulses_used = 0;

    double effective_period() const noexcept { return period * (1.0 + drift); }
};

constexpr std::size_t kMinSyncPulses = 1000;

/// Two-phase recovery: a 64-bin phase histogram gives the coarse offset, then
/// pulses are indexed against a running period estimate (tolerating missed
/// pulses) and a least-squares line fixes offset and drift.
ClockModel recover_clock(std::span<const double> sync_timestamps, double nominal_period);

struct GateAssignment {
    std::int64_t gate = 0;  // receiver-side gate count since t = offset
    double residue = 0.0;   // t - centre of that gate, seconds
};

GateAssignment assign_gate(double t, const ClockModel& clock) noexcept;
std::vector<GateAssignment> assign_gates(std::span<const double> timestamps, const ClockModel& clock);

/// Receiver gate count of transmitter gate 0, given the pre-flight estimate of
/// when gate 0 reaches the receiver. The estimate must be good to half a period.
std::int64_t resolve_gate_origin(const ClockModel& clock, double expected_gate0_time) noexcept;

} // namespace dqkd
