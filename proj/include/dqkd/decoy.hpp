#pragma once

#include "dqkd/core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace dqkd {

/// Integer counters for one intensity class.
struct IntensityTally {
    std::uint64_t sent = 0;
    std::uint64_t detected = 0; // gates with at least one accepted click, any basis
    std::uint64_t compared = 0; // disclosed basis-matched positions
    std::uint64_t errors = 0;   // disagreements among the compared positions

    double gain() const noexcept {
        return sent == 0 ? 0.0 : static_cast<double>(detected) / static_cast<double>(sent);
    }
    double error_rate() const noexcept {
        return compared == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(compared);
    }
    IntensityTally& operator+=(const IntensityTally& o) noexcept {
        sent += o.sent;
        detected += o.detected;
        compared += o.compared;
        errors += o.errors;
        return *this;
    }
    bool operator==(const IntensityTally&) const = default;
};

struct Tally {
    std::array<IntensityTally, 3> by_class{}; // indexed by IntensityClass

    IntensityTally& operator[](IntensityClass c) noexcept {
        return by_class[static_cast<std::size_t>(c)];
    }
    const IntensityTally& operator[](IntensityClass c) const noexcept {
        return by_class[static_cast<std::size_t>(c)];
    }
    Tally& operator+=(const Tally& o) noexcept {
        for (std::size_t i = 0; i < 3; ++i) by_class[i] += o.by_class[i];
        return *this;
    }
    bool operator==(const Tally&) const = default;
};

constexpr double kVacuumErrorRate = 0.5;

struct DecoyEstimate {
    double Q_mu = 0.0;
    double Q_nu = 0.0;
    double Y0 = 0.0;
    double E_mu = 0.0;
    double E_nu = 0.0;
    double Y1_lower = 0.0;
    double e1_upper = 0.5;
    double Q1_lower = 0.0;
    double e0 = kVacuumErrorRate;
    double R_per_gate = 0.0;
    double R_per_second = 0.0;

    // Binomial standard errors of the measured ratios.
    double Q_mu_se = 0.0;
    double Q_nu_se = 0.0;
    double Y0_se = 0.0;
    double E_mu_se = 0.0;
    double E_nu_se = 0.0;
};

/// Vacuum + weak decoy lower bound on the single-photon yield, clamped at 0.
double bound_y1(double Q_mu, double Q_nu, double Y0, double mu, double nu);

/// Upper bound on the single-photon error rate, clamped to [0, 1].
/// Throws DomainError when Y1_lower is zero.
double bound_e1(double E_nu, double Q_nu, double Y0, double Y1_lower, double nu);

/// q p_mu { -Q_mu f H2(E_mu) + Q1 [1 - H2(e1)] }, clamped at 0.
double secure_key_rate(const DecoyEstimate& est, const ProtocolParams& params);

/// Final key length for a reconciled block of n signal bits.
std::uint64_t secure_key_length(std::uint64_t n_key_signal_bits, const DecoyEstimate& est,
                                std::uint64_t leak_ec_bits);

constexpr std::uint64_t kSafetyMarginBits = 128;

/// Full estimate from integer tallies. Throws DomainError when a class was
/// never sent. A vanishing Y1 bound yields e1 = 1/2 and a zero rate.
DecoyEstimate estimate_from_tally(const Tally& tally, const ProtocolParams& params);

/// Completes an estimate whose gains and error rates are already filled in.
DecoyEstimate complete_estimate(DecoyEstimate est, const ProtocolParams& params);

/// Closed-form channel used for predictions: transmittance eta, background
/// yield Y0 (error 1/2) and intrinsic misalignment error.
struct AnalyticChannel {
    double eta = 0.0;
    double Y0 = 0.0;
    double e_intrinsic = 0.0;

    double gain(double mu) const noexcept;
    double error_rate(double mu) const noexcept;
    double true_y1() const noexcept;
    double true_e1() const noexcept;
};

DecoyEstimate analytic_estimate(const AnalyticChannel& channel, const ProtocolParams& params);

/// Tally CSV: header `intensity,sent,detected,errors[,compared]`. Without the
/// compared column, error rates are taken over the detected count.
Tally read_tally_csv(std::istream& is);
void write_tally_csv(std::ostream& os, const Tally& tally);

/// Human-readable block followed by `key,value` rows.
void write_estimate(std::ostream& os, const DecoyEstimate& est);

} // namespace dqkd
