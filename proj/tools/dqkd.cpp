#include "dqkd/orchestrator.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

using namespace dqkd;

namespace {

struct ConfigSource {
    std::string config_path;
    std::string preset = "paper-defaults";
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        app->add_option("--preset", preset, "Built-in configuration (paper-defaults, qber-calibrated)");
        app->add_option("--seed", seed, "Master seed replacing every per-module seed");
    }

    RunConfig load() const {
        RunConfig cfg = config_path.empty() ? preset_config(preset) : load_config(config_path);
        if (seed) apply_master_seed(cfg, *seed);
        return cfg;
    }
};

int run_simulate(const ConfigSource& src, const std::string& out, const std::string& listen,
                 const std::string& connect, std::optional<double> duration,
                 std::optional<double> gate_rate) {
    RunConfig cfg = src.load();
    if (!out.empty()) cfg.output_dir = out;
    if (duration) cfg.duration_s = *duration;
    if (gate_rate) cfg.protocol.gate_rate = *gate_rate;
    if (!listen.empty() || !connect.empty()) {
        cfg.transport.mode = TransportMode::Socket;
        cfg.transport.address = listen.empty() ? connect : listen;
    } else if (cfg.transport.mode == TransportMode::Socket) {
        throw Error("socket transport needs --listen (transmitter) or --connect (receiver)");
    }
    validate_config(cfg);

    SessionResult res;
    if (cfg.transport.mode == TransportMode::Socket) {
        const Role role = listen.empty() ? Role::Receiver : Role::Transmitter;
        std::unique_ptr<Transport> link =
            role == Role::Transmitter ? listen_transport(cfg.transport.address)
                                      : connect_transport(cfg.transport.address);
        res = run_session_endpoint(cfg, role, *link);
    } else {
        res = run_session(cfg);
    }
    write_outputs(cfg, res);

    std::uint64_t amplified = 0, final_bits = 0;
    for (const auto& b : res.blocks) {
        amplified += b.outcome == BlockOutcome::Amplified ? 1 : 0;
        final_bits += b.final_bits;
    }
    const auto& a = res.audit;
    const bool hygiene_ok = a.hygiene_violations == 0 && a.key_bits_disclosed == 0 &&
                            a.disclosed_bits_expected == a.disclosed_bits_observed;
    const bool leak_ok = a.leak_bits() == res.leak_bits_accounted;

    std::printf("rounds            %zu\n", res.rounds.size());
    std::printf("metric rows       %zu\n", res.metrics.size());
    std::printf("sifted bits       %llu\n", static_cast<unsigned long long>(res.sifted_bits_total));
    std::printf("sampled qber      %.4f\n", res.tally[IntensityClass::Signal].error_rate());
    if (res.estimate) {
        std::printf("secure rate       %.6g bit/gate, %.6g bit/s\n", res.estimate->R_per_gate,
                    res.estimate->R_per_second);
    } else {
        std::printf("secure rate       unavailable (%s)\n", res.estimate_error.c_str());
    }
    std::printf("blocks            %zu (%llu amplified)\n", res.blocks.size(),
                static_cast<unsigned long long>(amplified));
    std::printf("final key bits    %llu\n", static_cast<unsigned long long>(final_bits));
    if (res.both_sides) std::printf("keys identical    %s\n", res.keys_identical ? "yes" : "no");
    std::printf("frame hygiene     %s\n", hygiene_ok ? "ok" : "FAILED");
    std::printf("leak accounting   %s\n", leak_ok ? "ok" : "FAILED");
    std::printf("outputs           %s\n", cfg.output_dir.string().c_str());
    const bool ok = hygiene_ok && leak_ok && (!res.both_sides || res.keys_identical);
    return ok ? 0 : 2;
}

int run_analyze(const ConfigSource& src, const std::string& tally_path,
                std::optional<double> gate_rate) {
    RunConfig cfg = src.load();
    if (gate_rate) cfg.protocol.gate_rate = *gate_rate;
    std::ifstream in(tally_path);
    if (!in) throw Error("cannot open tally file " + tally_path);
    const Tally tally = read_tally_csv(in);
    write_estimate(std::cout, estimate_from_tally(tally, cfg.protocol));
    return 0;
}

int run_track(const ConfigSource& src, const std::string& station, double duration,
              const std::string& out, bool open_loop) {
    const RunConfig cfg = src.load();
    TrackingConfig t;
    if (station == "drone") {
        t = cfg.drone;
    } else if (station == "ground") {
        t = cfg.ground;
    } else {
        throw Error("--station must be drone or ground");
    }
    if (open_loop) {
        t.coarse = {};
        t.fine = {};
    }
    const PointingSeries series = run_tracking(t, duration, cfg.seeds.tracking);
    if (out.empty()) {
        write_series_csv(std::cout, series);
    } else {
        std::ofstream f(out);
        if (!f) throw Error("cannot write " + out);
        write_series_csv(f, series);
    }
    const AxisRms r = rms(series);
    std::fprintf(stderr, "%s residual rms: x %.4f um, y %.4f um; lock lost in %llu of %zu samples\n",
                 station.c_str(), r.sigma_x, r.sigma_y,
                 static_cast<unsigned long long>(series.lock_lost_samples), series.size());
    return 0;
}

int run_sweep(const ConfigSource& src, double from_db, double to_db, double step_db) {
    const RunConfig cfg = src.load();
    if (!(step_db > 0.0) || to_db < from_db || from_db < 0.0) {
        throw Error("sweep needs 0 <= from <= to and step > 0");
    }
    AnalyticChannel ch = analytic_channel(cfg);
    std::printf("loss_db,eta,Q_mu,E_mu,Y1_lower,e1_upper,R_per_gate,R_per_second\n");
    const auto steps = static_cast<int>(std::floor((to_db - from_db) / step_db + 1e-9));
    for (int i = 0; i <= steps; ++i) {
        const double loss = from_db + step_db * i;
        ch.eta = db_to_transmittance(loss) * cfg.detector.efficiency;
        const DecoyEstimate e = analytic_estimate(ch, cfg.protocol);
        std::printf("%.4g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", loss, ch.eta, e.Q_mu, e.E_mu, e.Y1_lower,
                    e.e1_upper, e.R_per_gate, e.R_per_second);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoy-state BB84 drone-to-ground link simulator"};
    app.require_subcommand(1);

    ConfigSource sim_src, ana_src, trk_src, swp_src;

    auto* sim = app.add_subcommand("simulate", "Run the full pipeline and write outputs");
    sim_src.add_to(sim);
    std::string out, listen, connect;
    std::optional<double> duration, gate_rate;
    sim->add_option("--out", out, "Output directory");
    auto* l = sim->add_option("--listen", listen, "Run the transmitter, accepting the peer on host:port");
    auto* c = sim->add_option("--connect", connect, "Run the receiver, connecting to host:port");
    l->excludes(c);
    sim->add_option("--duration", duration, "Override session duration (s)");
    sim->add_option("--gate-rate", gate_rate, "Override gate rate (Hz)");

    auto* ana = app.add_subcommand("analyze", "Decoy estimate from a tally CSV");
    ana_src.add_to(ana);
    std::string tally_path;
    ana->add_option("tally", tally_path, "CSV with intensity,sent,detected,errors[,compared]")->required();
    std::optional<double> ana_gate_rate;
    ana->add_option("--gate-rate", ana_gate_rate, "Gate rate (Hz) the tally was taken at");

    auto* trk = app.add_subcommand("track", "Tracking loop only; writes the pointing series CSV");
    trk_src.add_to(trk);
    std::string station = "drone", series_out;
    double track_duration = 10.0;
    bool open_loop = false;
    trk->add_option("--station", station, "drone or ground");
    trk->add_option("--duration", track_duration, "Seconds to simulate")->check(CLI::PositiveNumber);
    trk->add_option("--out", series_out, "CSV path (stdout when omitted)");
    trk->add_flag("--open-loop", open_loop, "Zero all loop gains");

    auto* swp = app.add_subcommand("keyrate-sweep", "Analytic key rate against total channel loss");
    swp_src.add_to(swp);
    double from_db = 0.0, to_db = 40.0, step_db = 1.0;
    swp->add_option("--from-db", from_db, "First loss value");
    swp->add_option("--to-db", to_db, "Last loss value");
    swp->add_option("--step-db", step_db, "Loss increment");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return run_simulate(sim_src, out, listen, connect, duration, gate_rate);
        if (ana->parsed()) return run_analyze(ana_src, tally_path, ana_gate_rate);
        if (trk->parsed()) return run_track(trk_src, station, track_duration, series_out, open_loop);
        if (swp->parsed()) return run_sweep(swp_src, from_db, to_db, step_db);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
