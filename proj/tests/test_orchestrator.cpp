#include "dqkd/orchestrator.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

using namespace dqkd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dqkd_orch_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig desk(const char* preset, double duration, double gate_rate) {
    RunConfig cfg = preset_config(preset);
    cfg.duration_s = duration;
    cfg.protocol.gate_rate = gate_rate;
    return cfg;
}

std::string field_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "";
}

} // namespace

TEST_CASE("presets load and validate") {
    for (const auto& name : preset_names()) {
        const auto cfg = preset_config(name);
        CHECK_NOTHROW(validate_config(cfg));
        CHECK(cfg.budget.total_db() == doctest::Approx(17.8));
        CHECK(cfg.protocol.mu_signal == 0.73);
        CHECK(cfg.protocol.p_decoy == 0.25);
        CHECK(cfg.duration_s == 400);
    }
    CHECK(preset_config("qber-calibrated").extinction_ratio == doctest::Approx(43.05));
    CHECK_THROWS(preset_config("nonexistent"));
}

TEST_CASE("config errors name the field or line") {
    const std::string text(preset_text("paper-defaults"));
    auto j = nlohmann::json::parse(text);
    j["protocol"].erase("mu_signal");
    CHECK(field_of(j.dump()) == "protocol.mu_signal");

    j = nlohmann::json::parse(text);
    j["session"]["duration_s"] = -1;
    CHECK(field_of(j.dump()) == "session.duration_s");

    j = nlohmann::json::parse(text);
    j["channel"]["colour"] = 1;
    CHECK(field_of(j.dump()) == "channel.colour");

    j = nlohmann::json::parse(text);
    j["protocol"]["p_signal"] = "3/5";
    CHECK(field_of(j.dump()).rfind("protocol.", 0) == 0);

    j = nlohmann::json::parse(text);
    j["tracking"]["drone"]["mode_field_radius_um"] = 0;
    CHECK(field_of(j.dump()).rfind("tracking.drone", 0) == 0);

    const std::string broken = "{\n  \"protocol\": {\n    \"mu_signal\": 0.73,,\n";
    const auto f = field_of(broken);
    CHECK(f.rfind("<config>:3:", 0) == 0);
}

TEST_CASE("config round trip and master seed") {
    auto cfg = preset_config("paper-defaults");
    cfg.seeds.channel = 99;
    cfg.output_dir = "elsewhere";
    const auto back = parse_config(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.seeds.channel == 99);

    auto a = cfg, b = cfg;
    apply_master_seed(a, 7);
    apply_master_seed(b, 7);
    CHECK(config_to_json(a) == config_to_json(b));
    CHECK(a.seeds.transmitter != a.seeds.channel);
    apply_master_seed(b, 8);
    CHECK(session_id_for(a) != session_id_for(b));

    const auto dir = scratch("cfg");
    std::ofstream(dir / "c.json") << config_to_json(cfg);
    CHECK(config_to_json(load_config(dir / "c.json")) == config_to_json(cfg));
    CHECK_THROWS(load_config(dir / "missing.json"));
    fs::remove_all(dir);
}

TEST_CASE("window plan") {
    auto cfg = desk("paper-defaults", 25, 50e3);
    const auto w = plan_windows(cfg);
    REQUIRE(w.size() == 3);
    CHECK(w[0].complete);
    CHECK(w[1].first_gate == 500'000);
    CHECK_FALSE(w[2].complete);
    CHECK(w[2].n_gates == 250'000);

    cfg.duration_s = 400;
    CHECK(plan_windows(cfg).size() == 40);
    cfg.duration_s = 10.001; // tail far too short for clock recovery
    CHECK(plan_windows(cfg).size() == 1);
}

TEST_CASE("empty session emits only the header") {
    std::ostringstream os;
    emit_metrics(os, {});
    CHECK(os.str() == "t_s,sifted_bits,sifted_hz,qber,secure_hz,drone_rms_x,drone_rms_y,ground_rms_x,ground_rms_y\n");
    CHECK(window_metrics({}, {}, nullptr, ProtocolParams{}, 10).empty());
}

TEST_CASE("squash") {
    RandomStream rng(1);
    const auto h = squash(5, 1u << 0, rng);
    CHECK(h.gate == 5);
    CHECK(h.basis == Basis::Rectilinear);
    CHECK(h.bit == 0);
    CHECK(squash(5, 1u << 3, rng).bit == 1);
    int rect = 0, ones = 0;
    for (int i = 0; i < 20'000; ++i) {
        rect += squash(0, 0b0101, rng).basis == Basis::Rectilinear;
        const auto d = squash(0, 0b1100, rng);
        CHECK(d.basis == Basis::Diagonal);
        ones += d.bit;
    }
    CHECK(std::abs(rect - 10'000) < 3 * 71);
    CHECK(std::abs(ones - 10'000) < 3 * 71);
}

TEST_CASE("smallest run: 10 s at 50 kHz") {
    const auto cfg = desk("paper-defaults", 10, 50e3);
    const auto res = run_session(cfg);
    CHECK(res.metrics.size() == 1);
    CHECK(res.rounds.size() == 1);
    CHECK(res.both_sides);
    CHECK(res.keys_identical);
    CHECK(res.audit.hygiene_violations == 0);
    CHECK(res.metrics[0].sifted_bits == res.sifted_bits_total);
}

TEST_CASE("25 s run drops the partial window") {
    const auto cfg = desk("paper-defaults", 25, 50e3);
    const auto res = run_session(cfg);
    REQUIRE(res.rounds.size() == 3);
    REQUIRE(res.metrics.size() == 2);
    CHECK(res.metrics[0].sifted_bits + res.metrics[1].sifted_bits ==
          res.rounds[0].sifted_bits + res.rounds[1].sifted_bits);
    std::uint64_t all = 0;
    for (const auto& r : res.rounds) all += r.sifted_bits;
    CHECK(all == res.sifted_bits_total);
    CHECK(res.metrics[1].window_start_s == 10.0);
    for (const auto& m : res.metrics) {
        CHECK(m.sampled_qber >= 0.0);
        CHECK(m.sampled_qber <= 1.0);
        CHECK(m.secure_rate_hz >= 0.0);
        CHECK(m.drone_rms_x > 0.0);
    }
}

TEST_CASE("identical seeds give byte-identical outputs") {
    auto cfg = desk("qber-calibrated", 20, 500e3);
    const auto d1 = scratch("det1"), d2 = scratch("det2");
    cfg.output_dir = d1;
    write_outputs(cfg, run_session(cfg));
    cfg.output_dir = d2;
    const auto res = run_session(cfg);
    write_outputs(cfg, res);
    CHECK(res.keys_identical);
    for (const char* f : {"metrics.csv", "tally.csv", "key_transmitter.qkdk", "key_receiver.qkdk"}) {
        CHECK_MESSAGE(slurp(d1 / f) == slurp(d2 / f), f);
        CHECK_FALSE(slurp(d1 / f).empty());
    }
    const auto audit = slurp(d2 / "audit.txt");
    CHECK(audit.find("[hygiene]") != std::string::npos);
    CHECK(audit.find("[leak]") != std::string::npos);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("socket endpoints reproduce the in-process session") {
    auto cfg = desk("qber-calibrated", 20, 500e3);
    const auto local = run_session(cfg);
    REQUIRE_FALSE(local.blocks.empty());

    const std::string address = "127.0.0.1:47312";
    SessionResult tx_res;
    std::exception_ptr tx_error;
    std::thread tx_thread([&] {
        try {
            auto link = listen_transport(address);
            tx_res = run_session_endpoint(cfg, Role::Transmitter, *link);
        } catch (...) {
            tx_error = std::current_exception();
        }
    });
    auto link = connect_transport(address, 10.0);
    const auto rx_res = run_session_endpoint(cfg, Role::Receiver, *link);
    tx_thread.join();
    REQUIRE_FALSE(tx_error);

    CHECK(tx_res.transcript_digest == local.transcript_digest);
    CHECK(rx_res.transcript_digest == local.transcript_digest);
    CHECK(tx_res.transmitter_key == local.transmitter_key);
    CHECK(rx_res.receiver_key == local.receiver_key);
    CHECK(tx_res.audit.hygiene_violations == 0);
    CHECK(rx_res.audit.key_bits_disclosed == 0);
}

TEST_CASE("frame audit on a full session") {
    const auto res = run_session(desk("qber-calibrated", 30, 500e3));
    const auto& a = res.audit;
    CHECK(a.rounds == 3);
    CHECK(a.hygiene_violations == 0);
    CHECK(a.key_bits_disclosed == 0);
    CHECK(a.disclosed_bits_expected == a.disclosed_bits_observed);
    CHECK(a.leak_bits() == res.leak_bits_accounted);
    std::uint64_t leak = 0;
    for (const auto& b : res.blocks) leak += b.leak_bits;
    CHECK(leak == res.leak_bits_accounted);
    CHECK(res.keys_identical);
    CHECK(res.stats.signal_clicks_correct >= 0.999 * res.stats.signal_clicks_gated);
}

TEST_CASE("100 s desk run agrees with the analytic prediction") {
    const auto cfg = desk("paper-defaults", 100, 500e3);
    const auto res = run_session(cfg);
    const auto ch = analytic_channel(cfg);
    const auto predicted = analytic_estimate(ch, cfg.protocol);
    const double qber = res.tally[IntensityClass::Signal].error_rate();
    CHECK(std::abs(qber - predicted.E_mu) <= 0.005);
    REQUIRE(res.estimate);
    CHECK(res.estimate->R_per_second == doctest::Approx(predicted.R_per_second).epsilon(0.10));
    CHECK(res.keys_identical);
}
