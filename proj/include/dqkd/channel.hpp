#pragma once

#include "dqkd/core.hpp"
#include "dqkd/random.hpp"
#include "dqkd/tracking.hpp"
#include "dqkd/transmitter.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace dqkd {

constexpr double kSpeedOfLight = 299'792'458.0;

enum class ArrivalOrigin : std::uint8_t { SignalPath = 0, Background = 1 };

struct ArrivalEvent {
    std::uint64_t gate_index = 0; // emitting gate (ground truth, not visible to the receiver)
    double arrival_time = 0.0;    // seconds, transmitter time base
    PolarizationState state = PolarizationState::H;
    std::uint32_t surviving_photons = 0;
    std::uint32_t flipped_photons = 0; // subset of surviving_photons now in the orthogonal state
    ArrivalOrigin origin = ArrivalOrigin::SignalPath;
};

/// Pointing-induced coupling, drone and ground series multiplied together and
/// normalized so that the modulation factor averages to one.
class CouplingProfile {
public:
    CouplingProfile() = default;
    CouplingProfile(double t_start, double sample_rate, std::vector<double> coupling,
                    double mean_coupling);

    /// coupling(t) / mean_coupling; 1 outside the covered interval.
    double factor(double t) const noexcept;
    bool empty() const noexcept { return coupling_.empty(); }

private:
    double t_start_ = 0.0;
    double sample_rate_ = 1.0;
    std::vector<double> coupling_;
    double inv_mean_ = 1.0;
};

struct ChannelState {
    LinkBudget budget;
    double unmodeled_loss_db = 0.0;
    double extinction_ratio = 30.0; // power contrast; infinity = perfect polarization
    double background_rate = 2000.0; // counts / s / detector
    double timing_jitter_sigma = 30e-12;
    const CouplingProfile* pointing = nullptr;

    double mean_transmittance() const {
        return db_to_transmittance(budget.total_db() + unmodeled_loss_db);
    }
    double flip_probability() const noexcept {
        return std::isinf(extinction_ratio) ? 0.0 : 1.0 / (1.0 + extinction_ratio);
    }
    double propagation_delay() const noexcept { return budget.distance_m / kSpeedOfLight; }
};

void validate_channel(const ChannelState& ch);

/// Extinction ratio whose single-photon flip probability equals `error`.
double extinction_for_error(double error);

struct ChannelStats {
    std::uint64_t clipped = 0; // pulses whose modulated transmittance exceeded 1
};

double compose_budget(const LinkBudget& budget);

/// Photon-by-photon thinning and depolarization of one pulse. Returns nothing
/// when no photon survives.
std::optional<ArrivalEvent> transmit(const PulseRecord& pulse, const ChannelState& channel,
                                     RandomStream& rng, ChannelStats* stats = nullptr);

/// Poisson background at background_rate per detector on [t_start, t_end),
/// each event landing on one of the four detector channels uniformly.
std::vector<ArrivalEvent> background_events(RandomStream& rng, const ChannelState& channel,
                                            double t_start, double t_end);

} // namespace dqkd
