#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dqkd {

// Error hierarchy. Everything thrown by the library derives from Error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

enum class Basis : std::uint8_t { Rectilinear = 0, Diagonal = 1 };
enum class IntensityClass : std::uint8_t { Signal = 0, Decoy = 1, Vacuum = 2 };

// H=0, V=1 in the rectilinear basis; D=0, A=1 in the diagonal basis.
using BitValue = std::uint8_t;

enum class PolarizationState : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

constexpr PolarizationState state_of(Basis b, BitValue bit) noexcept {
    return static_cast<PolarizationState>(static_cast<unsigned>(b) * 2 + (bit & 1u));
}
constexpr Basis basis_of(PolarizationState s) noexcept {
    return static_cast<Basis>(static_cast<unsigned>(s) / 2);
}
constexpr BitValue bit_of(PolarizationState s) noexcept {
    return static_cast<BitValue>(static_cast<unsigned>(s) & 1u);
}

std::string_view to_string(IntensityClass c) noexcept;
std::string_view to_string(PolarizationState s) noexcept;
std::optional<IntensityClass> parse_intensity(std::string_view s) noexcept;

struct ProtocolParams {
    double mu_signal = 0.73;
    double mu_decoy = 0.20;
    double mu_vacuum = 0.0;
    double p_signal = 0.5;
    double p_decoy = 0.25;
    double p_vacuum = 0.25;
    double gate_rate = 50e6;     // pulses per second
    double gate_width = 500e-12; // seconds
    double basis_factor_q = 0.5;
    double sample_fraction = 0.1;
    double ec_efficiency_f = 1.16;

    double mu_of(IntensityClass c) const noexcept {
        switch (c) {
        case IntensityClass::Signal: return mu_signal;
        case IntensityClass::Decoy: return mu_decoy;
        default: return mu_vacuum;
        }
    }
    double period() const noexcept { return 1.0 / gate_rate; }
};

struct LinkBudget {
    double link_loss_db = 9.0;
    double projection_loss_db = 3.0;
    double detection_loss_db = 5.0;
    double other_optics_loss_db = 0.8;
    // Documentation only; the link is lumped into the dB terms above.
    double distance_m = 200.0;
    double beam_aperture_fwhm_mm = 26.4;
    double rayleigh_length_m = 676.0;

    double total_db() const noexcept {
        return link_loss_db + projection_loss_db + detection_loss_db + other_optics_loss_db;
    }
};

/// Binary Shannon entropy in bits, with H2(0) = H2(1) = 0.
double binary_entropy(double e);

/// 10^(-loss_db/10).
double db_to_transmittance(double loss_db);

/// Returns the params unchanged when every invariant holds, otherwise throws
/// ValidationError naming the first offending field.
ProtocolParams validate_params(const ProtocolParams& params);

void validate_budget(const LinkBudget& budget);

/// Parses a decimal ("0.25") or rational ("1/4") literal.
double parse_exact_decimal(std::string_view text);

} // namespace dqkd
