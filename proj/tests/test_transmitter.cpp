#include "dqkd/transmitter.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

using namespace dqkd;

namespace {

ProtocolParams paper_params() {
    ProtocolParams p;
    p.gate_rate = 50e6;
    return p;
}

} // namespace

TEST_CASE("vacuum-only source") {
    ProtocolParams p = paper_params();
    p.p_signal = 0;
    p.p_decoy = 0;
    p.p_vacuum = 1;
    RandomStream rng(1);
    for (std::uint64_t g = 0; g < 1000; ++g) {
        const auto r = next_pulse(rng, p, g);
        CHECK(r.intensity == IntensityClass::Vacuum);
        CHECK(r.photon_count == 0);
        CHECK_FALSE(r.basis.has_value());
        CHECK_FALSE(r.bit.has_value());
        CHECK_FALSE(r.state().has_value());
    }
}

TEST_CASE("one million gates: class fractions, photon statistics, state histogram") {
    const ProtocolParams p = paper_params();
    RandomStream rng(2024);
    const std::uint64_t n = 1'000'000;
    const auto block = generate_block(rng, p, n);
    REQUIRE(block.pulses.size() == n);
    REQUIRE(block.syncs.size() == n);

    std::array<std::uint64_t, 3> cls{};
    std::array<std::uint64_t, 4> states{};
    double photons_signal = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto& r = block.pulses[i];
        CHECK(r.gate_index == i);
        ++cls[static_cast<std::size_t>(r.intensity)];
        if (r.intensity == IntensityClass::Vacuum) {
            REQUIRE(r.photon_count == 0);
            continue;
        }
        ++states[static_cast<std::size_t>(*r.state())];
        if (r.intensity == IntensityClass::Signal) photons_signal += r.photon_count;
    }
    const double nd = static_cast<double>(n);
    CHECK(std::abs(cls[0] / nd - 0.5) <= 0.002);
    CHECK(std::abs(cls[1] / nd - 0.25) <= 3 * std::sqrt(0.25 * 0.75 / nd));

    const double mean = photons_signal / static_cast<double>(cls[0]);
    CHECK(std::abs(mean - 0.73) <= 3 * std::sqrt(0.73 / static_cast<double>(cls[0])));

    const double non_vacuum = static_cast<double>(cls[0] + cls[1]);
    const double expect = non_vacuum / 4;
    double chi2 = 0;
    for (auto k : states) {
        CHECK(std::abs(static_cast<double>(k) - expect) <= 3 * std::sqrt(non_vacuum * 0.25 * 0.75));
        chi2 += (static_cast<double>(k) - expect) * (static_cast<double>(k) - expect) / expect;
    }
    CHECK(chi2 < 16.27); // chi-square, 3 dof, p = 0.001
}

TEST_CASE("block generation contract") {
    const ProtocolParams p = paper_params();
    RandomStream a(3);
    const auto one = generate_block(a, p, 1);
    REQUIRE(one.pulses.size() == 1);
    CHECK(one.pulses[0].gate_index == 0);

    RandomStream r1(11), r2(11);
    std::ostringstream s1, s2;
    write_pulse_csv(s1, generate_block(r1, p, 5000).pulses);
    write_pulse_csv(s2, generate_block(r2, p, 5000).pulses);
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().rfind("gate,intensity,basis,bit,photons\n", 0) == 0);

    RandomStream z(1);
    CHECK_THROWS_AS(generate_block(z, p, 0), DomainError);
}

TEST_CASE("sync pulses sit on the nominal grid") {
    const ProtocolParams p = paper_params();
    RandomStream rng(4);
    const auto b = generate_block(rng, p, 100, 1000);
    for (std::size_t i = 0; i < b.syncs.size(); ++i) {
        CHECK(b.syncs[i].gate_index == 1000 + i);
        CHECK(b.syncs[i].emit_time == doctest::Approx((1000.0 + i) / p.gate_rate));
    }
}

TEST_CASE("source jitter") {
    const ProtocolParams p = paper_params();
    RandomStream rng(5);
    double s2 = 0;
    const int n = 20000;
    for (int g = 0; g < n; ++g) {
        const auto r = next_pulse(rng, p, g, 10e-12);
        const double d = r.emit_time - g / p.gate_rate;
        s2 += d * d;
    }
    CHECK(std::sqrt(s2 / n) == doctest::Approx(10e-12).epsilon(0.05));
}

TEST_CASE("prepared gate record packs class, basis and bit") {
    PulseRecord r;
    r.intensity = IntensityClass::Decoy;
    r.basis = Basis::Diagonal;
    r.bit = 1;
    const auto g = PreparedGate::from(r);
    CHECK(g.intensity() == IntensityClass::Decoy);
    CHECK(g.basis() == Basis::Diagonal);
    CHECK(g.bit() == 1);
    PulseRecord v;
    CHECK(PreparedGate::from(v).intensity() == IntensityClass::Vacuum);
}
