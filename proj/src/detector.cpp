#include "dqkd/detector.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace dqkd {

void validate_detector(const DetectorConfig& cfg, const LinkBudget& budget) {
    if (!(cfg.efficiency > 0.0 && cfg.efficiency <= 1.0)) {
        throw ValidationError("efficiency", "must lie in (0,1]");
    }
    if (budget.detection_loss_db > 0.0 && cfg.efficiency != 1.0) {
        throw ValidationError("efficiency",
                              "detection loss already in the link budget; efficiency must be 1");
    }
    if (!(cfg.dark_rate >= 0.0)) throw ValidationError("dark_rate", "must be >= 0");
    if (!(cfg.dead_time >= 0.0)) throw ValidationError("dead_time", "must be >= 0");
    if (!(cfg.tdc_resolution > 0.0)) throw ValidationError("tdc_resolution", "must be > 0");
}

namespace {

std::uint64_t to_ticks(double t, double resolution) {
    return t <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(t / resolution));
}

} // namespace

std::vector<DetectionEvent> detect(const ArrivalEvent& arrival, const DetectorConfig& cfg,
                                   const ReceiverClock& clock, RandomStream& rng) {
    std::vector<DetectionEvent> out;
    const std::uint64_t ticks = to_ticks(clock.to_local(arrival.arrival_time), cfg.tdc_resolution);

    if (arrival.origin == ArrivalOrigin::Background) {
        DetectionEvent ev;
        ev.raw_timestamp = ticks;
        ev.detector = arrival.state;
        ev.oracle = {EventOrigin::Background, std::numeric_limits<std::uint64_t>::max()};
        out.push_back(ev);
        return out;
    }

    unsigned fired = 0; // bitmask over H, V, D, A
    for (std::uint32_t i = 0; i < arrival.surviving_photons; ++i) {
        PolarizationState s = arrival.state;
        if (i < arrival.flipped_photons) s = state_of(basis_of(s), bit_of(s) ^ 1u);
        const std::uint32_t r = rng.next_u32();
        const auto measured = static_cast<Basis>(r & 1u);
        const PolarizationState hit =
            measured == basis_of(s) ? s : state_of(measured, static_cast<BitValue>((r >> 1) & 1u));
        if (cfg.efficiency < 1.0 && !rng.bernoulli(cfg.efficiency)) continue;
        fired |= 1u << static_cast<unsigned>(hit);
    }
    const bool multi = std::popcount(fired) > 1;
    for (unsigned d = 0; d < 4; ++d) {
        if (!(fired & (1u << d))) continue;
        DetectionEvent ev;
        ev.raw_timestamp = ticks;
        ev.detector = static_cast<PolarizationState>(d);
        ev.multi_click = multi;
        ev.oracle = {EventOrigin::Signal, arrival.gate_index};
        out.push_back(ev);
    }
    return out;
}

std::vector<DetectionEvent> dark_counts(RandomStream& rng, const DetectorConfig& cfg,
                                        double t_start, double t_end) {
    if (!(t_end > t_start)) throw DomainError("dark_counts: empty window");
    std::vector<DetectionEvent> out;
    if (cfg.dark_rate <= 0.0) return out;
    for (unsigned d = 0; d < 4; ++d) {
        double t = t_start;
        for (;;) {
            t += rng.exponential(cfg.dark_rate);
            if (t >= t_end) break;
            DetectionEvent ev;
            ev.raw_timestamp = to_ticks(t, cfg.tdc_resolution);
            ev.detector = static_cast<PolarizationState>(d);
            ev.oracle = {EventOrigin::Dark, std::numeric_limits<std::uint64_t>::max()};
            out.push_back(ev);
        }
    }
    return out;
}

void finalize_stream(std::vector<DetectionEvent>& events, const DetectorConfig& cfg) {
    std::stable_sort(events.begin(), events.end(),
                     [](const DetectionEvent& a, const DetectionEvent& b) {
                         return a.raw_timestamp < b.raw_timestamp;
                     });
    const auto dead_ticks = static_cast<std::uint64_t>(std::llround(cfg.dead_time / cfg.tdc_resolution));
    if (dead_ticks == 0) return;
    std::array<std::uint64_t, 4> last{};
    std::array<bool, 4> seen{};
    std::size_t w = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto d = static_cast<unsigned>(events[i].detector);
        if (seen[d] && events[i].raw_timestamp - last[d] < dead_ticks) continue;
        seen[d] = true;
        last[d] = events[i].raw_timestamp;
        events[w++] = events[i];
    }
    events.resize(w);
}

double timestamp_seconds(const DetectionEvent& ev, const DetectorConfig& cfg) noexcept {
    return static_cast<double>(ev.raw_timestamp) * cfg.tdc_resolution;
}

std::vector<DetectionEvent> gate_filter(std::span<const DetectionEvent> events,
                                        const std::optional<ClockModel>& clock, double gate_width,
                                        const DetectorConfig& cfg) {
    if (!clock) throw SyncError("gate_filter: no recovered clock model");
    if (gate_width >= clock->period) return {events.begin(), events.end()};
    std::vector<DetectionEvent> kept;
    const double half = 0.5 * gate_width;
    for (const auto& ev : events) {
        if (std::abs(assign_gate(timestamp_seconds(ev, cfg), *clock).residue) <= half) {
            kept.push_back(ev);
        }
    }
    return kept;
}

void write_event_dump(std::ostream& os, std::span<const DetectionEvent> events) {
    for (const auto& ev : events) {
        unsigned char rec[10];
        for (int i = 0; i < 8; ++i) rec[i] = static_cast<unsigned char>(ev.raw_timestamp >> (8 * i));
        rec[8] = static_cast<unsigned char>(ev.detector);
        rec[9] = ev.multi_click ? 1 : 0;
        os.write(reinterpret_cast<const char*>(rec), sizeof rec);
    }
}

std::vector<DetectionEvent> read_event_dump(std::istream& is) {
    std::vector<DetectionEvent> out;
    unsigned char rec[10];
    while (is.read(reinterpret_cast<char*>(rec), sizeof rec)) {
        DetectionEvent ev;
        for (int i = 0; i < 8; ++i) ev.raw_timestamp |= static_cast<std::uint64_t>(rec[i]) << (8 * i);
        if (rec[8] > 3) throw DomainError("event dump: bad detector id");
        ev.detector = static_cast<PolarizationState>(rec[8]);
        ev.multi_click = (rec[9] & 1u) != 0;
        out.push_back(ev);
    }
    if (is.gcount() != 0) throw DomainError("event dump: truncated record");
    return out;
}

} // namespace dqkd
