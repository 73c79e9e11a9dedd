#include "dqkd/channel.hpp"

#include <algorithm>
#include <cmath>

namespace dqkd {

CouplingProfile::CouplingProfile(double t_start, double sample_rate, std::vector<double> coupling,
                                 double mean_coupling)
    : t_start_(t_start), sample_rate_(sample_rate), coupling_(std::move(coupling)) {
    if (!(sample_rate > 0.0)) throw DomainError("CouplingProfile: sample rate must be > 0");
    if (!(mean_coupling > 0.0)) throw DomainError("CouplingProfile: mean coupling must be > 0");
    inv_mean_ = 1.0 / mean_coupling;
}

double CouplingProfile::factor(double t) const noexcept {
    if (coupling_.empty()) return 1.0;
    const double pos = (t - t_start_) * sample_rate_;
    if (pos < 0.0) return coupling_.front() * inv_mean_;
    const auto idx = static_cast<std::size_t>(pos);
    if (idx >= coupling_.size()) return coupling_.back() * inv_mean_;
    return coupling_[idx] * inv_mean_;
}

void validate_channel(const ChannelState& ch) {
    validate_budget(ch.budget);
    if (!(ch.unmodeled_loss_db >= 0.0)) throw ValidationError("unmodeled_loss_db", "must be >= 0");
    if (!(ch.extinction_ratio >= 1.0)) throw ValidationError("extinction_ratio", "must be >= 1");
    if (!(ch.background_rate >= 0.0)) throw ValidationError("background_rate", "must be >= 0");
    if (!(ch.timing_jitter_sigma >= 0.0)) {
        throw ValidationError("timing_jitter_sigma", "must be >= 0");
    }
}

double extinction_for_error(double error) {
    if (!(error > 0.0 && error <= 0.5)) throw DomainError("extinction_for_error: need 0 < e <= 1/2");
    return 1.0 / error - 1.0;
}

double compose_budget(const LinkBudget& budget) {
    validate_budget(budget);
    return budget.total_db();
}

std::optional<ArrivalEvent> transmit(const PulseRecord& pulse, const ChannelState& channel,
                                     RandomStream& rng, ChannelStats* stats) {
    if (pulse.photon_count == 0 || !pulse.state()) return std::nullopt;

    double eta = channel.mean_transmittance();
    if (channel.pointing != nullptr) eta *= channel.pointing->factor(pulse.emit_time);
    if (eta > 1.0) {
        eta = 1.0;
        if (stats) ++stats->clipped;
    }

    std::uint32_t survivors = 0;
    for (std::uint32_t i = 0; i < pulse.photon_count; ++i) survivors += rng.bernoulli(eta) ? 1 : 0;
    if (survivors == 0) return std::nullopt;

    ArrivalEvent ev;
    ev.gate_index = pulse.gate_index;
    ev.state = *pulse.state();
    ev.surviving_photons = survivors;
    const double flip = channel.flip_probability();
    if (flip > 0.0) {
        for (std::uint32_t i = 0; i < survivors; ++i) ev.flipped_photons += rng.bernoulli(flip) ? 1 : 0;
    }
    ev.arrival_time = pulse.emit_time + channel.propagation_delay();
    if (channel.timing_jitter_sigma > 0.0) ev.arrival_time += channel.timing_jitter_sigma * rng.normal();
    ev.origin = ArrivalOrigin::SignalPath;
    return ev;
}

std::vector<ArrivalEvent> background_events(RandomStream& rng, const ChannelState& channel,
                                            double t_start, double t_end) {
    std::vector<ArrivalEvent> out;
    if (!(t_end > t_start)) throw DomainError("background_events: empty window");
    const double total_rate = 4.0 * channel.background_rate;
    if (total_rate <= 0.0) return out;
    double t = t_start;
    for (;;) {
        t += rng.exponential(total_rate);
        if (t >= t_end) break;
        ArrivalEvent ev;
        ev.gate_index = std::numeric_limits<std::uint64_t>::max();
        ev.arrival_time = t;
        ev.state = static_cast<PolarizationState>(rng.next_u32() & 3u);
        ev.surviving_photons = 1;
        ev.origin = ArrivalOrigin::Background;
        out.push_back(ev);
    }
    return out;
}

} // namespace dqkd
