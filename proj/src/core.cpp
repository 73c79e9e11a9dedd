#include "dqkd/core.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace dqkd {

std::string_view to_string(IntensityClass c) noexcept {
    switch (c) {
    case IntensityClass::Signal: return "signal";
    case IntensityClass::Decoy: return "decoy";
    case IntensityClass::Vacuum: return "vacuum";
    }
    return "?";
}

std::string_view to_string(PolarizationState s) noexcept {
    constexpr std::string_view names[] = {"H", "V", "D", "A"};
    return names[static_cast<unsigned>(s) & 3u];
}

std::optional<IntensityClass> parse_intensity(std::string_view s) noexcept {
    if (s == "signal") return IntensityClass::Signal;
    if (s == "decoy") return IntensityClass::Decoy;
    if (s == "vacuum") return IntensityClass::Vacuum;
    return std::nullopt;
}

double binary_entropy(double e) {
    if (!(e >= 0.0 && e <= 1.0)) {
        throw DomainError("binary_entropy: argument outside [0,1]");
    }
    if (e == 0.0 || e == 1.0) return 0.0;
    return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

double db_to_transmittance(double loss_db) {
    if (!(loss_db >= 0.0)) {
        throw DomainError("db_to_transmittance: negative loss");
    }
    return std::pow(10.0, -loss_db / 10.0);
}

namespace {

std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

ProtocolParams validate_params(const ProtocolParams& p) {
    for (auto [name, v] : {std::pair{"p_signal", p.p_signal}, std::pair{"p_decoy", p.p_decoy},
                           std::pair{"p_vacuum", p.p_vacuum}}) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(name, "probability outside [0,1]");
    }
    const double sum = p.p_signal + p.p_decoy + p.p_vacuum;
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ValidationError("p_signal+p_decoy+p_vacuum", "probabilities sum to " + fmt_num(sum));
    }
    if (p.mu_vacuum != 0.0) throw ValidationError("mu_vacuum", "vacuum intensity must be 0");
    if (!(p.mu_decoy > 0.0)) throw ValidationError("mu_decoy", "decoy intensity must be positive");
    if (!(p.mu_signal > p.mu_decoy)) throw ValidationError("mu_decoy", "decoy exceeds signal");
    if (!(p.gate_rate > 0.0)) throw ValidationError("gate_rate", "must be positive");
    if (!(p.gate_width > 0.0)) throw ValidationError("gate_width", "must be positive");
    if (!(p.gate_width < 1.0 / p.gate_rate)) {
        throw ValidationError("gate_width", "gate width must be shorter than the gate period");
    }
    if (!(p.basis_factor_q > 0.0 && p.basis_factor_q <= 1.0)) {
        throw ValidationError("basis_factor_q", "must lie in (0,1]");
    }
    if (!(p.sample_fraction > 0.0 && p.sample_fraction < 1.0)) {
        throw ValidationError("sample_fraction", "must lie in (0,1)");
    }
    if (!(p.ec_efficiency_f >= 1.0)) throw ValidationError("ec_efficiency_f", "must be >= 1");
    return p;
}

void validate_budget(const LinkBudget& b) {
    for (auto [name, v] : {std::pair{"link_loss_db", b.link_loss_db},
                           std::pair{"projection_loss_db", b.projection_loss_db},
                           std::pair{"detection_loss_db", b.detection_loss_db},
                           std::pair{"other_optics_loss_db", b.other_optics_loss_db}}) {
        if (!(v >= 0.0)) throw ValidationError(name, "loss must be >= 0");
    }
}

double parse_exact_decimal(std::string_view text) {
    auto parse_one = [&](std::string_view s) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) {
            throw DomainError("not a number: '" + std::string(text) + "'");
        }
        return v;
    };
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        const double num = parse_one(text.substr(0, slash));
        const double den = parse_one(text.substr(slash + 1));
        if (den == 0.0) throw DomainError("zero denominator in '" + std::string(text) + "'");
        return num / den;
    }
    return parse_one(text);
}

} // namespace dqkd
