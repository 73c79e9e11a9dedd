#pragma once

#include "dqkd/channel.hpp"
#include "dqkd/core.hpp"
#include "dqkd/random.hpp"
#include "dqkd/timesync.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dqkd {

struct DetectorConfig {
    double efficiency = 1.0;    // 1 when the budget already carries detection loss
    double dark_rate = 100.0;   // counts / s / detector
    double dead_time = 50e-9;   // s
    double tdc_resolution = 1e-12; // s per tick
};

/// Maps true time onto the receiver's free-running TDC clock.
struct ReceiverClock {
    double offset = 1.3e-9; // s
    double drift = 2e-7;

    double to_local(double t) const noexcept { return t * (1.0 + drift) + offset; }
};

void validate_detector(const DetectorConfig& cfg, const LinkBudget& budget);

enum class EventOrigin : std::uint8_t { Signal = 0, Background = 1, Dark = 2 };

/// Simulation ground truth attached to each click. Protocol code must never read it.
struct OracleTag {
    EventOrigin origin = EventOrigin::Signal;
    std::uint64_t true_gate = 0;
};

struct DetectionEvent {
    std::uint64_t raw_timestamp = 0; // TDC ticks
    PolarizationState detector = PolarizationState::H;
    bool multi_click = false;
    OracleTag oracle;

    bool dark_origin() const noexcept { return oracle.origin == EventOrigin::Dark; }
};

/// Passive basis choice and projection of every photon in the arrival.
std::vector<DetectionEvent> detect(const ArrivalEvent& arrival, const DetectorConfig& cfg,
                                   const ReceiverClock& clock, RandomStream& rng);

/// Dark clicks on each of the four detectors over [t_start, t_end) of local time.
std::vector<DetectionEvent> dark_counts(RandomStream& rng, const DetectorConfig& cfg,
                                        double t_start, double t_end);

/// Stable time sort followed by non-paralyzable dead time per detector.
void finalize_stream(std::vector<DetectionEvent>& events, const DetectorConfig& cfg);

double timestamp_seconds(const DetectionEvent& ev, const DetectorConfig& cfg) noexcept;

/// Keeps clicks whose residue against the recovered gate grid lies within
/// +-gate_width/2. A gate as wide as the period keeps every click.
std::vector<DetectionEvent> gate_filter(std::span<const DetectionEvent> events,
                                        const std::optional<ClockModel>& clock, double gate_width,
                                        const DetectorConfig& cfg);

/// Little-endian record stream: u64 ticks, u8 detector id, u8 flags (bit0 multi_click).
void write_event_dump(std::ostream& os, std::span<const DetectionEvent> events);
std::vector<DetectionEvent> read_event_dump(std::istream& is);

} // namespace dqkd
