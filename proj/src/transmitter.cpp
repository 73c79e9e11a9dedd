#include "dqkd/transmitter.hpp"

#include <ostream>

namespace dqkd {

PulseRecord next_pulse(RandomStream& rng, const ProtocolParams& params, std::uint64_t gate_index,
                       double source_jitter_rms) {
    PulseRecord rec;
    rec.gate_index = gate_index;

    const double u = rng.uniform();
    if (u < params.p_signal) {
        rec.intensity = IntensityClass::Signal;
    } else if (u < params.p_signal + params.p_decoy) {
        rec.intensity = IntensityClass::Decoy;
    } else {
        rec.intensity = IntensityClass::Vacuum;
    }

    if (rec.intensity != IntensityClass::Vacuum) {
        const std::uint32_t r = rng.next_u32();
        rec.basis = static_cast<Basis>(r & 1u);
        rec.bit = static_cast<BitValue>((r >> 1) & 1u);
        rec.photon_count = rng.poisson(params.mu_of(rec.intensity));
    }

    rec.emit_time = static_cast<double>(gate_index) / params.gate_rate;
    if (source_jitter_rms > 0.0) rec.emit_time += source_jitter_rms * rng.normal();
    return rec;
}

PulseBlock generate_block(RandomStream& rng, const ProtocolParams& params, std::uint64_t n_gates,
                          std::uint64_t first_gate, double source_jitter_rms) {
    if (n_gates == 0) throw DomainError("generate_block: empty block requested");
    PulseBlock block;
    block.pulses.reserve(n_gates);
    block.syncs.reserve(n_gates);
    for (std::uint64_t i = 0; i < n_gates; ++i) {
        const std::uint64_t gate = first_gate + i;
        block.pulses.push_back(next_pulse(rng, params, gate, source_jitter_rms));
        block.syncs.push_back({gate, static_cast<double>(gate) / params.gate_rate});
    }
    return block;
}

PreparedGate PreparedGate::from(const PulseRecord& p) noexcept {
    PreparedGate g;
    g.code = static_cast<std::uint8_t>(p.intensity);
    if (p.basis) g.code |= static_cast<std::uint8_t>(static_cast<unsigned>(*p.basis) << 2);
    if (p.bit) g.code |= static_cast<std::uint8_t>((*p.bit & 1u) << 3);
    return g;
}

void write_pulse_csv(std::ostream& os, std::span<const PulseRecord> pulses, bool header) {
    if (header) os << "gate,intensity,basis,bit,photons\n";
    for (const auto& p : pulses) {
        os << p.gate_index << ',' << to_string(p.intensity) << ',';
        if (p.basis) os << (*p.basis == Basis::Rectilinear ? "rect" : "diag");
        os << ',';
        if (p.bit) os << static_cast<int>(*p.bit);
        os << ',' << p.photon_count << '\n';
    }
}

} // namespace dqkd
