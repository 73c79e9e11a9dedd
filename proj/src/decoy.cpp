#include "dqkd/decoy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dqkd {

double bound_y1(double Q_mu, double Q_nu, double Y0, double mu, double nu) {
    if (!(mu > nu && nu > 0.0)) throw DomainError("bound_y1: requires mu > nu > 0");
    const double mu2 = mu * mu;
    const double nu2 = nu * nu;
    const double bracket = Q_nu * std::exp(nu) - Q_mu * std::exp(mu) * nu2 / mu2 -
                           (mu2 - nu2) / mu2 * Y0;
    return std::max(0.0, mu / (mu * nu - nu2) * bracket);
}

double bound_e1(double E_nu, double Q_nu, double Y0, double Y1_lower, double nu) {
    if (!(nu > 0.0)) throw DomainError("bound_e1: requires nu > 0");
    if (!(Y1_lower > 0.0)) throw DomainError("bound_e1: single-photon yield bound is zero");
    const double e1 = (E_nu * Q_nu * std::exp(nu) - kVacuumErrorRate * Y0) / (Y1_lower * nu);
    return std::clamp(e1, 0.0, 1.0);
}

namespace {

// Beyond e1 = 1/2 the single-photon term carries no secrecy.
double privacy_fraction(double e1) { return 1.0 - binary_entropy(std::min(e1, 0.5)); }

} // namespace

double secure_key_rate(const DecoyEstimate& est, const ProtocolParams& params) {
    const double ec = est.Q_mu * params.ec_efficiency_f * binary_entropy(std::min(est.E_mu, 0.5));
    const double pa = est.Q1_lower * privacy_fraction(est.e1_upper);
    return std::max(0.0, params.basis_factor_q * params.p_signal * (pa - ec));
}

std::uint64_t secure_key_length(std::uint64_t n_key_signal_bits, const DecoyEstimate& est,
                                std::uint64_t leak_ec_bits) {
    if (n_key_signal_bits == 0 || !(est.Q_mu > 0.0) || !(est.Q1_lower > 0.0)) return 0;
    const double entropy = static_cast<double>(n_key_signal_bits) * (est.Q1_lower / est.Q_mu) *
                           privacy_fraction(est.e1_upper);
    const double len = std::floor(entropy - static_cast<double>(leak_ec_bits) -
                                  static_cast<double>(kSafetyMarginBits));
    return len > 0.0 ? static_cast<std::uint64_t>(len) : 0;
}

DecoyEstimate complete_estimate(DecoyEstimate est, const ProtocolParams& params) {
    const double mu = params.mu_signal;
    const double nu = params.mu_decoy;
    est.e0 = kVacuumErrorRate;
    est.Y1_lower = bound_y1(est.Q_mu, est.Q_nu, est.Y0, mu, nu);
    if (est.Y1_lower > 0.0) {
        est.e1_upper = bound_e1(est.E_nu, est.Q_nu, est.Y0, est.Y1_lower, nu);
        est.Q1_lower = est.Y1_lower * mu * std::exp(-mu);
    } else {
        est.e1_upper = 0.5;
        est.Q1_lower = 0.0;
    }
    est.R_per_gate = secure_key_rate(est, params);
    est.R_per_second = est.R_per_gate * params.gate_rate;
    return est;
}

namespace {

double binomial_se(std::uint64_t k, std::uint64_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(k) / static_cast<double>(n);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

} // namespace

DecoyEstimate estimate_from_tally(const Tally& tally, const ProtocolParams& params) {
    for (auto c : {IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum}) {
        if (tally[c].sent == 0) {
            throw DomainError("estimate: no " + std::string(to_string(c)) + " pulses were sent");
        }
    }
    const auto& s = tally[IntensityClass::Signal];
    const auto& d = tally[IntensityClass::Decoy];
    const auto& v = tally[IntensityClass::Vacuum];
    DecoyEstimate est;
    est.Q_mu = s.gain();
    est.Q_nu = d.gain();
    est.Y0 = v.gain();
    est.E_mu = s.error_rate();
    est.E_nu = d.error_rate();
    est.Q_mu_se = binomial_se(s.detected, s.sent);
    est.Q_nu_se = binomial_se(d.detected, d.sent);
    est.Y0_se = binomial_se(v.detected, v.sent);
    est.E_mu_se = binomial_se(s.errors, s.compared);
    est.E_nu_se = binomial_se(d.errors, d.compared);
    return complete_estimate(est, params);
}

double AnalyticChannel::gain(double mu) const noexcept {
    return 1.0 - (1.0 - Y0) * std::exp(-eta * mu);
}

double AnalyticChannel::error_rate(double mu) const noexcept {
    const double q = gain(mu);
    if (q <= 0.0) return 0.0;
    return (kVacuumErrorRate * Y0 + e_intrinsic * (1.0 - Y0) * (1.0 - std::exp(-eta * mu))) / q;
}

double AnalyticChannel::true_y1() const noexcept { return 1.0 - (1.0 - Y0) * (1.0 - eta); }

double AnalyticChannel::true_e1() const noexcept {
    return (kVacuumErrorRate * Y0 + e_intrinsic * eta * (1.0 - Y0)) / true_y1();
}

DecoyEstimate analytic_estimate(const AnalyticChannel& ch, const ProtocolParams& params) {
    DecoyEstimate est;
    est.Q_mu = ch.gain(params.mu_signal);
    est.Q_nu = ch.gain(params.mu_decoy);
    est.Y0 = ch.Y0;
    est.E_mu = ch.error_rate(params.mu_signal);
    est.E_nu = ch.error_rate(params.mu_decoy);
    return complete_estimate(est, params);
}

Tally read_tally_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DomainError("tally csv: empty input");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            out.push_back(cell);
        }
        return out;
    };
    const auto header = split(line);
    const bool has_compared = header.size() == 5 && header[4] == "compared";
    if (header.size() < 4 || header[0] != "intensity" || header[1] != "sent" ||
        header[2] != "detected" || header[3] != "errors" || (header.size() == 5 && !has_compared)) {
        throw DomainError("tally csv: expected header intensity,sent,detected,errors[,compared]");
    }
    Tally tally;
    std::array<bool, 3> seen{};
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw DomainError("tally csv line " + std::to_string(line_no) + ": wrong column count");
        }
        const auto cls = parse_intensity(cells[0]);
        if (!cls) {
            throw DomainError("tally csv line " + std::to_string(line_no) + ": unknown intensity '" +
                              cells[0] + "'");
        }
        auto num = [&](const std::string& s) -> std::uint64_t {
            try {
                std::size_t pos = 0;
                const auto v = std::stoull(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw DomainError("tally csv line " + std::to_string(line_no) + ": bad count '" +
                                  s + "'");
            }
        };
        auto& t = tally[*cls];
        t.sent = num(cells[1]);
        t.detected = num(cells[2]);
        t.errors = num(cells[3]);
        t.compared = has_compared ? num(cells[4]) : t.detected;
        if (t.detected > t.sent || t.errors > t.compared) {
            throw DomainError("tally csv line " + std::to_string(line_no) + ": inconsistent counts");
        }
        seen[static_cast<std::size_t>(*cls)] = true;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (!seen[i]) {
            throw DomainError("tally csv: missing row for " +
                              std::string(to_string(static_cast<IntensityClass>(i))));
        }
    }
    return tally;
}

void write_tally_csv(std::ostream& os, const Tally& tally) {
    os << "intensity,sent,detected,errors,compared\n";
    for (auto c : {IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum}) {
        const auto& t = tally[c];
        os << to_string(c) << ',' << t.sent << ',' << t.detected << ',' << t.errors << ','
           << t.compared << '\n';
    }
}

void write_estimate(std::ostream& os, const DecoyEstimate& est) {
    const auto old_precision = os.precision(10);
    os << "decoy estimate\n"
       << "  Q_mu       = " << est.Q_mu << " +- " << est.Q_mu_se << '\n'
       << "  Q_nu       = " << est.Q_nu << " +- " << est.Q_nu_se << '\n'
       << "  Y0         = " << est.Y0 << " +- " << est.Y0_se << '\n'
       << "  E_mu       = " << est.E_mu << " +- " << est.E_mu_se << '\n'
       << "  E_nu       = " << est.E_nu << " +- " << est.E_nu_se << '\n'
       << "  Y1_lower   = " << est.Y1_lower << '\n'
       << "  e1_upper   = " << est.e1_upper << '\n'
       << "  Q1_lower   = " << est.Q1_lower << '\n'
       << "  e0         = " << est.e0 << '\n'
       << "  R_per_gate = " << est.R_per_gate << '\n'
       << "  R_per_s    = " << est.R_per_second << '\n';
    os << "key,value\n"
       << "Q_mu," << est.Q_mu << "\nQ_nu," << est.Q_nu << "\nY0," << est.Y0 << "\nE_mu,"
       << est.E_mu << "\nE_nu," << est.E_nu << "\nY1_lower," << est.Y1_lower << "\ne1_upper,"
       << est.e1_upper << "\nQ1_lower," << est.Q1_lower << "\ne0," << est.e0 << "\nR_per_gate,"
       << est.R_per_gate << "\nR_per_second," << est.R_per_second << '\n';
    os.precision(old_precision);
}

} // namespace dqkd
