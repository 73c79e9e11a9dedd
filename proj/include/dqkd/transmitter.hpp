#pragma once

#include "dqkd/core.hpp"
#include "dqkd/random.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dqkd {

struct PulseRecord {
    std::uint64_t gate_index = 0;
    IntensityClass intensity = IntensityClass::Vacuum;
    std::optional<Basis> basis;
    std::optional<BitValue> bit;
    std::uint32_t photon_count = 0;
    double emit_time = 0.0; // seconds

    std::optional<PolarizationState> state() const noexcept {
        if (!basis || !bit) return std::nullopt;
        return state_of(*basis, *bit);
    }
};

struct SyncPulse {
    std::uint64_t gate_index = 0;
    double emit_time = 0.0;
};

struct PulseBlock {
    std::vector<PulseRecord> pulses;
    std::vector<SyncPulse> syncs;
};

constexpr double kDefaultSourceJitter = 10e-12;

/// Draws one gate: intensity class, then (for non-vacuum) basis and bit, then
/// a Poisson photon number at the class mean.
PulseRecord next_pulse(RandomStream& rng, const ProtocolParams& params, std::uint64_t gate_index,
                       double source_jitter_rms = kDefaultSourceJitter);

/// n_gates consecutive pulses starting at first_gate, with one sync pulse per gate.
PulseBlock generate_block(RandomStream& rng, const ProtocolParams& params, std::uint64_t n_gates,
                          std::uint64_t first_gate = 0,
                          double source_jitter_rms = kDefaultSourceJitter);

/// One byte per gate: the transmitter's private preparation record kept for sifting.
/// Bits 0-1 intensity class, bit 2 basis, bit 3 key bit.
struct PreparedGate {
    std::uint8_t code = static_cast<std::uint8_t>(IntensityClass::Vacuum);

    static PreparedGate from(const PulseRecord& p) noexcept;
    IntensityClass intensity() const noexcept { return static_cast<IntensityClass>(code & 3u); }
    Basis basis() const noexcept { return static_cast<Basis>((code >> 2) & 1u); }
    BitValue bit() const noexcept { return static_cast<BitValue>((code >> 3) & 1u); }
};

/// CSV dump, header `gate,intensity,basis,bit,photons`.
void write_pulse_csv(std::ostream& os, std::span<const PulseRecord> pulses, bool header = true);

} // namespace dqkd
