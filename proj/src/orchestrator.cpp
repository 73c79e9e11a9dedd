#include "dqkd/orchestrator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>

namespace dqkd {

PhysicsStats& PhysicsStats::operator+=(const PhysicsStats& o) noexcept {
    gates += o.gates;
    arrivals += o.arrivals;
    clicks += o.clicks;
    gated_clicks += o.gated_clicks;
    detected_gates += o.detected_gates;
    multi_click_gates += o.multi_click_gates;
    cross_basis_gates += o.cross_basis_gates;
    signal_clicks_gated += o.signal_clicks_gated;
    signal_clicks_correct += o.signal_clicks_correct;
    noise_clicks_gated += o.noise_clicks_gated;
    clipped += o.clipped;
    sync_pulses += o.sync_pulses;
    lock_lost_samples += o.lock_lost_samples;
    return *this;
}

double predicted_noise_yield(const RunConfig& cfg) noexcept {
    const double rate = 4.0 * (cfg.background_rate + cfg.detector.dark_rate);
    return 1.0 - std::exp(-rate * cfg.protocol.gate_width);
}

AnalyticChannel analytic_channel(const RunConfig& cfg) {
    const ChannelState ch = cfg.channel_state();
    AnalyticChannel a;
    a.eta = ch.mean_transmittance() * cfg.detector.efficiency;
    a.Y0 = predicted_noise_yield(cfg);
    a.e_intrinsic = ch.flip_probability();
    return a;
}

// ------------------------------------------------------------------ windows

std::vector<WindowPlan> plan_windows(const RunConfig& cfg) {
    std::vector<WindowPlan> out;
    const double rate = cfg.protocol.gate_rate;
    const auto full = static_cast<std::uint64_t>(std::floor(cfg.duration_s / cfg.window_s * (1.0 + 1e-12)));
    auto gate_at = [&](double t) { return static_cast<std::uint64_t>(std::llround(t * rate)); };
    for (std::uint64_t w = 0; w < full; ++w) {
        WindowPlan p;
        p.index = w;
        p.t_start = static_cast<double>(w) * cfg.window_s;
        p.t_end = static_cast<double>(w + 1) * cfg.window_s;
        p.first_gate = gate_at(p.t_start);
        p.n_gates = gate_at(p.t_end) - p.first_gate;
        out.push_back(p);
    }
    const double tail_start = static_cast<double>(full) * cfg.window_s;
    if (cfg.duration_s > tail_start) {
        WindowPlan p;
        p.index = full;
        p.t_start = tail_start;
        p.t_end = cfg.duration_s;
        p.first_gate = gate_at(p.t_start);
        p.n_gates = gate_at(p.t_end) - p.first_gate;
        p.complete = false;
        // A tail too short to lock the gate clock is not simulated.
        const double syncs = static_cast<double>(p.n_gates) * cfg.sync.detection_probability;
        if (syncs >= 2.0 * static_cast<double>(kMinSyncPulses)) out.push_back(p);
    }
    return out;
}

PointingTrace simulate_pointing(const RunConfig& cfg) {
    PointingTrace trace;
    const auto n_windows = static_cast<std::size_t>(
        std::floor(cfg.duration_s / cfg.window_s * (1.0 + 1e-12)));
    trace.drone_rms.assign(n_windows, {});
    trace.ground_rms.assign(n_windows, {});
    if (!cfg.tracking_enabled) return trace;

    const RandomStream root = RandomStream(cfg.seeds.tracking).derive("pointing");
    Tracker drone(cfg.drone, root.derive("drone"));
    Tracker ground(cfg.ground, root.derive("ground"));
    const double rate = cfg.drone.loop_rate_fine;
    const auto steps = static_cast<std::size_t>(std::ceil(cfg.duration_s * rate));
    const double per_window = cfg.window_s * rate;

    std::vector<double> coupling;
    coupling.reserve(steps);
    std::vector<std::array<double, 4>> sums(n_windows, std::array<double, 4>{});
    std::vector<std::uint64_t> counts(n_windows, 0);
    double total = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const PointingSample d = drone.step();
        const PointingSample g = ground.step();
        const double c = d.coupling * g.coupling;
        coupling.push_back(c);
        total += c;
        trace.lock_lost_samples += (d.lock_lost ? 1 : 0) + (g.lock_lost ? 1 : 0);
        const auto w = static_cast<std::size_t>(static_cast<double>(i) / per_window);
        if (w < n_windows) {
            sums[w][0] += d.err_x * d.err_x;
            sums[w][1] += d.err_y * d.err_y;
            sums[w][2] += g.err_x * g.err_x;
            sums[w][3] += g.err_y * g.err_y;
            ++counts[w];
        }
    }
    for (std::size_t w = 0; w < n_windows; ++w) {
        if (counts[w] == 0) continue;
        const double n = static_cast<double>(counts[w]);
        trace.drone_rms[w] = {std::sqrt(sums[w][0] / n), std::sqrt(sums[w][1] / n)};
        trace.ground_rms[w] = {std::sqrt(sums[w][2] / n), std::sqrt(sums[w][3] / n)};
    }
    trace.mean_coupling = total / static_cast<double>(steps);
    if (!(trace.mean_coupling > 0.0)) throw TrackingError("pointing never coupled any light");
    trace.profile = CouplingProfile(0.0, rate, std::move(coupling), trace.mean_coupling);
    return trace;
}

Detection squash(std::uint64_t gate, unsigned fired_mask, RandomStream& rng) {
    const unsigned rect = fired_mask & 3u;
    const unsigned diag = (fired_mask >> 2) & 3u;
    if (rect == 0 && diag == 0) throw DomainError("squash: no detector fired");
    Basis basis;
    if (rect != 0 && diag != 0) {
        basis = static_cast<Basis>(rng.next_u32() & 1u);
    } else {
        basis = rect != 0 ? Basis::Rectilinear : Basis::Diagonal;
    }
    const unsigned bits = basis == Basis::Rectilinear ? rect : diag;
    BitValue bit;
    if (bits == 3u) {
        bit = static_cast<BitValue>(rng.next_u32() & 1u);
    } else {
        bit = bits == 2u ? 1 : 0;
    }
    return {gate, basis, bit};
}

namespace {

RandomStream module_stream(std::uint64_t seed, std::string_view label, std::uint64_t window) {
    return RandomStream(seed).derive(label).derive(window);
}

double quantize(double t, double resolution) {
    return t <= 0.0 ? 0.0 : std::round(t / resolution) * resolution;
}

} // namespace

WindowPhysics simulate_window(const RunConfig& cfg, const PointingTrace& pointing,
                              const WindowPlan& plan) {
    WindowPhysics out;
    const ProtocolParams& params = cfg.protocol;
    ChannelState channel = cfg.channel_state();
    if (!pointing.profile.empty()) channel.pointing = &pointing.profile;
    const double delay = channel.propagation_delay();

    RandomStream tx = module_stream(cfg.seeds.transmitter, "transmitter", plan.index);
    RandomStream ch = module_stream(cfg.seeds.channel, "channel", plan.index);
    RandomStream rx = module_stream(cfg.seeds.receiver, "receiver", plan.index);
    RandomStream sync = module_stream(cfg.seeds.channel, "sync", plan.index);

    std::vector<PreparedGate> prepared;
    prepared.reserve(plan.n_gates);
    std::vector<DetectionEvent> events;
    std::vector<double> sync_times;
    sync_times.reserve(static_cast<std::size_t>(static_cast<double>(plan.n_gates) *
                                                cfg.sync.detection_probability * 1.01) + 16);
    ChannelStats ch_stats;
    PhysicsStats& st = out.stats;

    for (std::uint64_t i = 0; i < plan.n_gates; ++i) {
        const std::uint64_t gate = plan.first_gate + i;
        const PulseRecord pulse = next_pulse(tx, params, gate, cfg.source_jitter_sigma);
        prepared.push_back(PreparedGate::from(pulse));
        if (auto arrival = transmit(pulse, channel, ch, &ch_stats)) {
            ++st.arrivals;
            for (auto& ev : detect(*arrival, cfg.detector, cfg.receiver_clock, rx)) events.push_back(ev);
        }
        if (sync.bernoulli(cfg.sync.detection_probability)) {
            double t = static_cast<double>(gate) / params.gate_rate + delay;
            if (cfg.sync.jitter_sigma > 0.0) t += cfg.sync.jitter_sigma * sync.normal();
            sync_times.push_back(quantize(cfg.receiver_clock.to_local(t), cfg.detector.tdc_resolution));
        }
    }
    st.gates = plan.n_gates;
    st.sync_pulses = sync_times.size();
    st.clipped = ch_stats.clipped;

    RandomStream background = ch.derive("background");
    for (const auto& a : background_events(background, channel, plan.t_start + delay, plan.t_end + delay)) {
        for (auto& ev : detect(a, cfg.detector, cfg.receiver_clock, rx)) events.push_back(ev);
    }
    RandomStream dark = rx.derive("dark");
    for (auto& ev : dark_counts(dark, cfg.detector, cfg.receiver_clock.to_local(plan.t_start + delay),
                                cfg.receiver_clock.to_local(plan.t_end + delay))) {
        events.push_back(ev);
    }
    finalize_stream(events, cfg.detector);
    st.clicks = events.size();

    out.clock.window = plan.index;
    out.clock.model = recover_clock(sync_times, params.period());
    out.clock.gate_lag = resolve_gate_origin(out.clock.model, cfg.receiver_clock.to_local(delay));
    sync_times = {};

    const auto gated = gate_filter(events, out.clock.model, params.gate_width, cfg.detector);
    events = {};

    RandomStream squash_rng = rx.derive("squash");
    const std::uint64_t end_gate = plan.first_gate + plan.n_gates;
    std::int64_t current = -1;
    unsigned mask = 0;
    auto flush = [&] {
        if (current < 0) return;
        ++st.detected_gates;
        if (std::popcount(mask) > 1) ++st.multi_click_gates;
        if ((mask & 3u) != 0 && (mask & 12u) != 0) ++st.cross_basis_gates;
        out.detections.push_back(squash(static_cast<std::uint64_t>(current), mask, squash_rng));
    };
    for (const auto& ev : gated) {
        const GateAssignment ga = assign_gate(timestamp_seconds(ev, cfg.detector), out.clock.model);
        const std::int64_t g = ga.gate - out.clock.gate_lag;
        if (g < static_cast<std::int64_t>(plan.first_gate) || g >= static_cast<std::int64_t>(end_gate)) {
            continue;
        }
        ++st.gated_clicks;
        if (ev.oracle.origin == EventOrigin::Signal) {
            ++st.signal_clicks_gated;
            if (ev.oracle.true_gate == static_cast<std::uint64_t>(g)) ++st.signal_clicks_correct;
        } else {
            ++st.noise_clicks_gated;
        }
        if (g != current) {
            flush();
            current = g;
            mask = 0;
        }
        mask |= 1u << static_cast<unsigned>(ev.detector);
    }
    flush();
    // Clicks are time ordered, but jitter can swap neighbours across a gate boundary.
    std::sort(out.detections.begin(), out.detections.end(),
              [](const Detection& a, const Detection& b) { return a.gate < b.gate; });
    out.detections.erase(std::unique(out.detections.begin(), out.detections.end(),
                                     [](const Detection& a, const Detection& b) { return a.gate == b.gate; }),
                         out.detections.end());

    out.log = PreparedLog(plan.first_gate, std::move(prepared));
    return out;
}

// -------------------------------------------------------------------- audit

namespace {

struct RoundAudit {
    std::uint64_t round = 0;
    std::vector<IntensityClass> intensity;
    std::uint64_t announced = 0;
    bool have_match = false;
    bool have_seed = false;
    bool have_tally = false;
    std::uint64_t expected = 0;
};

} // namespace

FrameAudit audit_transcript(std::span<const TranscriptEntry> transcript, Role perspective,
                            double sample_fraction) {
    FrameAudit audit;
    RoundAudit r;
    bool round_open = false;
    const Role other = perspective == Role::Transmitter ? Role::Receiver : Role::Transmitter;

    for (const auto& entry : transcript) {
        Frame f;
        try {
            f = decode_frame(entry.bytes);
        } catch (const FrameError&) {
            ++audit.hygiene_violations;
            continue;
        }
        const auto tag = static_cast<std::size_t>(f.type);
        ++audit.frames_by_type[tag];
        audit.bytes_by_type[tag] += entry.bytes.size();
        const Role sender = entry.outgoing ? perspective : other;
        const bool from_tx = sender == Role::Transmitter;

        try {
            ByteReader in(f.payload);
            switch (f.type) {
            case FrameType::BasisAnnounce: {
                if (from_tx) throw ProtocolError("announce from transmitter");
                r = RoundAudit{};
                round_open = true;
                r.round = in.varint();
                in.u8();
                const auto gates = in.delta_list();
                const Bits bases = in.bits();
                in.expect_done();
                if (bases.size() != gates.size()) throw ProtocolError("announce carries extra bits");
                r.announced = gates.size();
                break;
            }
            case FrameType::MatchSet: {
                if (!from_tx || !round_open || r.have_match) throw ProtocolError("misplaced match set");
                if (in.varint() != r.round) throw ProtocolError("round mismatch");
                const std::uint64_t count = in.varint();
                if (count != r.announced) throw ProtocolError("match set length");
                const auto packed = in.bytes((count + 3) / 4);
                in.expect_done();
                for (std::uint64_t i = 0; i < count; ++i) {
                    const unsigned code = (packed[i / 4] >> (2 * (i % 4))) & 3u;
                    if (code == 1) r.intensity.push_back(IntensityClass::Signal);
                    if (code == 2) r.intensity.push_back(IntensityClass::Decoy);
                    if (code == 3) r.intensity.push_back(IntensityClass::Vacuum);
                }
                r.have_match = true;
                break;
            }
            case FrameType::SampleSeed: {
                if (from_tx || !r.have_match || r.have_seed) throw ProtocolError("misplaced sample seed");
                if (in.varint() != r.round) throw ProtocolError("round mismatch");
                const auto seed = in.bytes(32);
                in.expect_done();
                const SampleSplit split = sample_split(r.intensity, sample_fraction, seed);
                const auto decoys = static_cast<std::uint64_t>(
                    std::count(r.intensity.begin(), r.intensity.end(), IntensityClass::Decoy));
                r.expected = split.sample.size() + decoys;
                audit.disclosed_bits_expected += 2 * r.expected;
                r.have_seed = true;
                break;
            }
            case FrameType::SampleBits: {
                if (in.varint() != r.round) throw ProtocolError("round mismatch");
                const Bits bits = in.bits();
                in.expect_done();
                audit.disclosed_bits_observed += bits.size();
                if (!r.have_seed) {
                    audit.key_bits_disclosed += bits.size();
                    throw ProtocolError("bits disclosed before the sample was fixed");
                }
                if (bits.size() != r.expected) {
                    if (bits.size() > r.expected) audit.key_bits_disclosed += bits.size() - r.expected;
                    throw ProtocolError("disclosed bit count differs from the sample");
                }
                break;
            }
            case FrameType::TallyReport: {
                if (!from_tx || !r.have_seed) throw ProtocolError("misplaced tally");
                if (in.varint() != r.round) throw ProtocolError("round mismatch");
                for (int i = 0; i < 12; ++i) in.varint();
                in.expect_done();
                r.have_tally = true;
                ++audit.rounds;
                break;
            }
            case FrameType::EcSyndrome: {
                if (!from_tx || !r.have_tally) throw ProtocolError("syndrome before the sample was closed");
                in.u64();
                const std::uint32_t n = in.u32();
                const std::uint32_t m = in.u32();
                in.bytes(32);
                const Bits s = in.bits();
                in.expect_done();
                if (s.size() != m || m >= n) throw ProtocolError("syndrome size");
                audit.syndrome_bits += m;
                break;
            }
            case FrameType::EcHash: {
                in.u64();
                if (from_tx) {
                    in.u64();
                    in.u64();
                    audit.hash_bits += kVerifyHashBits;
                } else {
                    if (in.u8() > 2) throw ProtocolError("unknown status");
                }
                in.expect_done();
                break;
            }
            case FrameType::PaSeed: {
                if (!from_tx) throw ProtocolError("PA seed from receiver");
                in.u64();
                in.bytes(32);
                in.u32();
                in.expect_done();
                break;
            }
            case FrameType::Abort: break;
            }
        } catch (const Error&) {
            ++audit.hygiene_violations;
        }
    }
    return audit;
}

// ------------------------------------------------------------------ metrics

std::vector<WindowMetrics> window_metrics(std::span<const RoundSummary> rounds,
                                          std::span<const WindowPlan> windows,
                                          const PointingTrace* pointing, const ProtocolParams& params,
                                          double window_s) {
    std::vector<WindowMetrics> rows;
    const std::size_t n = std::min(rounds.size(), windows.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!windows[i].complete) continue;
        const RoundSummary& r = rounds[i];
        WindowMetrics m;
        m.window_start_s = windows[i].t_start;
        m.sifted_bits = r.sifted_bits;
        m.sifted_rate_hz = static_cast<double>(r.sifted_bits) / window_s;
        m.sampled_qber = r.sampled_qber();
        try {
            m.secure_rate_hz = estimate_from_tally(r.tally, params).R_per_second;
        } catch (const DomainError&) {
            m.secure_rate_hz = 0.0;
        }
        if (pointing && i < pointing->drone_rms.size()) {
            m.drone_rms_x = pointing->drone_rms[i].sigma_x;
            m.drone_rms_y = pointing->drone_rms[i].sigma_y;
            m.ground_rms_x = pointing->ground_rms[i].sigma_x;
            m.ground_rms_y = pointing->ground_rms[i].sigma_y;
        }
        rows.push_back(m);
    }
    return rows;
}

void emit_metrics(std::ostream& os, std::span<const WindowMetrics> rows) {
    os << "t_s,sifted_bits,sifted_hz,qber,secure_hz,drone_rms_x,drone_rms_y,ground_rms_x,ground_rms_y\n";
    char buf[512];
    for (const auto& m : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%llu,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f\n", m.window_start_s,
                      static_cast<unsigned long long>(m.sifted_bits), m.sifted_rate_hz, m.sampled_qber,
                      m.secure_rate_hz, m.drone_rms_x, m.drone_rms_y, m.ground_rms_x, m.ground_rms_y);
        os << buf;
    }
}

// ------------------------------------------------------------------ session

namespace {

SessionSettings settings_for(const RunConfig& cfg) {
    return {session_id_for(cfg), cfg.protocol, cfg.reconciliation};
}

RandomStream transmitter_post_rng(const RunConfig& cfg) {
    return RandomStream(cfg.seeds.transmitter).derive("post");
}

RandomStream receiver_post_rng(const RunConfig& cfg) {
    return RandomStream(cfg.seeds.sampling).derive("post");
}

std::uint64_t digest(std::span<const TranscriptEntry> transcript) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](std::uint8_t b) {
        h ^= b;
        h *= 0x100000001b3ull;
    };
    for (const auto& e : transcript) {
        mix(e.outgoing ? 1 : 0);
        for (auto b : e.bytes) mix(b);
    }
    return h;
}

void fill_common(SessionResult& res, const RunConfig& cfg, const PointingTrace& pointing,
                 const Endpoint& view) {
    res.rounds = view.rounds();
    for (const auto& r : res.rounds) {
        res.tally += r.tally;
        res.sifted_bits_total += r.sifted_bits;
    }
    try {
        res.estimate = estimate_from_tally(res.tally, cfg.protocol);
    } catch (const DomainError& e) {
        res.estimate_error = e.what();
    }
    res.metrics = window_metrics(res.rounds, res.windows, &pointing, cfg.protocol, cfg.window_s);
    res.discarded_tail_bits = view.discarded_tail_bits();
    res.mean_coupling = pointing.mean_coupling;
    res.stats.lock_lost_samples = pointing.lock_lost_samples;
}

} // namespace

SessionResult run_session(const RunConfig& cfg) {
    validate_config(cfg);
    SessionResult res;
    res.both_sides = true;
    res.windows = plan_windows(cfg);
    const PointingTrace pointing = simulate_pointing(cfg);

    TransmitterEndpoint tx(settings_for(cfg), transmitter_post_rng(cfg));
    ReceiverEndpoint rx(settings_for(cfg), receiver_post_rng(cfg));
    for (std::size_t i = 0; i < res.windows.size(); ++i) {
        const bool final_round = i + 1 == res.windows.size();
        WindowPhysics phys = simulate_window(cfg, pointing, res.windows[i]);
        res.stats += phys.stats;
        res.clock_fits.push_back(phys.clock);
        tx.begin_round(std::move(phys.log), final_round);
        auto announce = rx.begin_round(std::move(phys.detections), final_round);
        drive_round_local(tx, rx, std::move(announce));
    }

    fill_common(res, cfg, pointing, tx);
    if (rx.rounds().size() != tx.rounds().size()) throw ProtocolError("round count disagrees");
    for (std::size_t i = 0; i < tx.rounds().size(); ++i) {
        if (!(tx.rounds()[i].tally == rx.rounds()[i].tally)) throw ProtocolError("tallies disagree");
    }
    res.blocks = tx.blocks();
    for (std::size_t i = 0; i < res.blocks.size() && i < rx.blocks().size(); ++i) {
        res.blocks[i].decode_iterations = rx.blocks()[i].decode_iterations;
        res.blocks[i].corrected_errors = rx.blocks()[i].corrected_errors;
    }
    res.transmitter_key = tx.final_key();
    res.receiver_key = rx.final_key();
    res.keys_identical = res.transmitter_key == res.receiver_key;
    res.leak_bits_accounted = tx.leak_bits();
    res.transcript = tx.transcript();
    res.transcript_digest = digest(res.transcript);
    res.audit = audit_transcript(res.transcript, Role::Transmitter, cfg.protocol.sample_fraction);
    return res;
}

SessionResult run_session_endpoint(const RunConfig& cfg, Role role, Transport& transport) {
    validate_config(cfg);
    SessionResult res;
    res.role = role;
    res.windows = plan_windows(cfg);
    const PointingTrace pointing = simulate_pointing(cfg);

    std::unique_ptr<Endpoint> endpoint;
    TransmitterEndpoint* tx = nullptr;
    ReceiverEndpoint* rx = nullptr;
    if (role == Role::Transmitter) {
        auto e = std::make_unique<TransmitterEndpoint>(settings_for(cfg), transmitter_post_rng(cfg));
        tx = e.get();
        endpoint = std::move(e);
    } else {
        auto e = std::make_unique<ReceiverEndpoint>(settings_for(cfg), receiver_post_rng(cfg));
        rx = e.get();
        endpoint = std::move(e);
    }

    for (std::size_t i = 0; i < res.windows.size(); ++i) {
        const bool final_round = i + 1 == res.windows.size();
        WindowPhysics phys = simulate_window(cfg, pointing, res.windows[i]);
        res.stats += phys.stats;
        res.clock_fits.push_back(phys.clock);
        if (tx) {
            tx->begin_round(std::move(phys.log), final_round);
            drive_round(*tx, transport);
        } else {
            auto announce = rx->begin_round(std::move(phys.detections), final_round);
            drive_round(*rx, transport, std::move(announce));
        }
    }

    fill_common(res, cfg, pointing, *endpoint);
    res.blocks = endpoint->blocks();
    (tx ? res.transmitter_key : res.receiver_key) = endpoint->final_key();
    res.leak_bits_accounted = endpoint->leak_bits();
    res.transcript = endpoint->transcript();
    // Digest in the transmitter's orientation so both sides and both modes compare equal.
    if (role == Role::Receiver) {
        std::vector<TranscriptEntry> flipped = res.transcript;
        for (auto& e : flipped) e.outgoing = !e.outgoing;
        res.transcript_digest = digest(flipped);
    } else {
        res.transcript_digest = digest(res.transcript);
    }
    res.audit = audit_transcript(res.transcript, role, cfg.protocol.sample_fraction);
    return res;
}

// ------------------------------------------------------------------ outputs

void write_audit(std::ostream& os, const RunConfig& cfg, const SessionResult& res) {
    const auto old = os.precision(10);
    auto role_name = [](Role r) { return r == Role::Transmitter ? "transmitter" : "receiver"; };

    os << "[session]\n"
       << "session_id = " << session_id_for(cfg) << '\n'
       << "view = " << (res.both_sides ? "both" : role_name(res.role)) << '\n'
       << "duration_s = " << cfg.duration_s << '\n'
       << "window_s = " << cfg.window_s << '\n'
       << "gate_rate = " << cfg.protocol.gate_rate << '\n'
       << "rounds = " << res.rounds.size() << '\n'
       << "metric_rows = " << res.metrics.size() << '\n'
       << "transcript_digest = " << res.transcript_digest << '\n';

    os << "\n[tally]\n";
    for (auto c : {IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum}) {
        const auto& t = res.tally[c];
        os << to_string(c) << " = sent " << t.sent << ", detected " << t.detected << ", compared "
           << t.compared << ", errors " << t.errors << '\n';
    }
    os << "sifted_bits = " << res.sifted_bits_total << '\n'
       << "sum_window_sifted_bits = ";
    std::uint64_t window_sum = 0;
    for (const auto& m : res.metrics) window_sum += m.sifted_bits;
    os << window_sum << '\n';

    os << "\n[estimate]\n";
    if (res.estimate) {
        const auto& e = *res.estimate;
        os << "Q_mu = " << e.Q_mu << "\nQ_nu = " << e.Q_nu << "\nY0 = " << e.Y0 << "\nE_mu = " << e.E_mu
           << "\nE_nu = " << e.E_nu << "\nY1_lower = " << e.Y1_lower << "\ne1_upper = " << e.e1_upper
           << "\nQ1_lower = " << e.Q1_lower << "\nR_per_gate = " << e.R_per_gate
           << "\nR_per_second = " << e.R_per_second << '\n';
    } else {
        os << "error = " << res.estimate_error << '\n';
    }

    os << "\n[blocks]\n";
    std::uint64_t amplified = 0, failed = 0, mismatched = 0, final_bits = 0;
    for (const auto& b : res.blocks) {
        if (b.outcome == BlockOutcome::Amplified) ++amplified;
        if (b.outcome == BlockOutcome::DecodeFailed) ++failed;
        if (b.outcome == BlockOutcome::HashMismatch) ++mismatched;
        final_bits += b.final_bits;
    }
    os << "count = " << res.blocks.size() << "\namplified = " << amplified << "\ndecode_failed = " << failed
       << "\nhash_mismatch = " << mismatched << "\nfinal_key_bits = " << final_bits
       << "\ndiscarded_tail_bits = " << res.discarded_tail_bits << '\n';
    for (const auto& b : res.blocks) {
        os << "block." << b.id << " = n " << b.n << ", m " << b.m << ", leak " << b.leak_bits << ", final "
           << b.final_bits << ", outcome "
           << (b.outcome == BlockOutcome::Amplified
                   ? "amplified"
                   : (b.outcome == BlockOutcome::DecodeFailed ? "decode_failed" : "hash_mismatch"));
        if (res.both_sides || res.role == Role::Receiver) {
            os << ", iterations " << b.decode_iterations << ", corrected " << b.corrected_errors;
        }
        os << '\n';
    }

    os << "\n[frames]\n";
    for (std::uint8_t t = 1; t <= 9; ++t) {
        os << to_string(static_cast<FrameType>(t)) << " = " << res.audit.frames_by_type[t] << " frames, "
           << res.audit.bytes_by_type[t] << " bytes\n";
    }

    const auto& a = res.audit;
    os << "\n[hygiene]\n"
       << "rounds_audited = " << a.rounds << '\n'
       << "disclosed_bits_expected = " << a.disclosed_bits_expected << '\n'
       << "disclosed_bits_observed = " << a.disclosed_bits_observed << '\n'
       << "key_bits_disclosed = " << a.key_bits_disclosed << '\n'
       << "violations = " << a.hygiene_violations << '\n'
       << "status = "
       << (a.hygiene_violations == 0 && a.key_bits_disclosed == 0 &&
                   a.disclosed_bits_expected == a.disclosed_bits_observed
               ? "ok"
               : "FAILED")
       << '\n';

    os << "\n[leak]\n"
       << "syndrome_bits = " << a.syndrome_bits << '\n'
       << "hash_bits = " << a.hash_bits << '\n'
       << "observed_total = " << a.leak_bits() << '\n'
       << "accounted_total = " << res.leak_bits_accounted << '\n'
       << "status = " << (a.leak_bits() == res.leak_bits_accounted ? "ok" : "FAILED") << '\n';

    os << "\n[keys]\n";
    if (res.both_sides) {
        os << "transmitter_bits = " << res.transmitter_key.size() << '\n'
           << "receiver_bits = " << res.receiver_key.size() << '\n'
           << "identical = " << (res.keys_identical ? "yes" : "no") << '\n';
    } else {
        const Bits& k = res.role == Role::Transmitter ? res.transmitter_key : res.receiver_key;
        os << role_name(res.role) << "_bits = " << k.size() << '\n';
    }

    const auto& s = res.stats;
    os << "\n[physics]\n"
       << "gates = " << s.gates << "\narrivals = " << s.arrivals << "\nclicks = " << s.clicks
       << "\ngated_clicks = " << s.gated_clicks << "\ndetected_gates = " << s.detected_gates
       << "\nmulti_click_gates = " << s.multi_click_gates << "\ncross_basis_gates = " << s.cross_basis_gates
       << "\nsignal_clicks_gated = " << s.signal_clicks_gated
       << "\nsignal_clicks_correct_gate = " << s.signal_clicks_correct
       << "\nnoise_clicks_gated = " << s.noise_clicks_gated << "\nclipped_pulses = " << s.clipped
       << "\nsync_pulses = " << s.sync_pulses << "\nlock_lost_samples = " << s.lock_lost_samples
       << "\nmean_coupling = " << res.mean_coupling << '\n';

    os << "\n[clock]\n";
    for (const auto& c : res.clock_fits) {
        os << "window." << c.window << " = offset " << c.model.offset << ", drift " << c.model.drift
           << ", residual_rms " << c.model.fit_residual_rms << ", pulses " << c.model.pulses_used << ", lag "
           << c.gate_lag << '\n';
    }
    os.precision(old);
}

void write_outputs(const RunConfig& cfg, const SessionResult& res) {
    std::filesystem::create_directories(cfg.output_dir);
    auto open = [&](const char* name) {
        std::ofstream f(cfg.output_dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (cfg.output_dir / name).string());
        return f;
    };
    {
        auto f = open("metrics.csv");
        emit_metrics(f, res.metrics);
    }
    {
        auto f = open("tally.csv");
        write_tally_csv(f, res.tally);
    }
    if (res.estimate) {
        auto f = open("estimate.txt");
        write_estimate(f, *res.estimate);
    }
    {
        auto f = open("audit.txt");
        write_audit(f, cfg, res);
    }
    if (res.both_sides || res.role == Role::Transmitter) {
        write_key_file(cfg.output_dir / "key_transmitter.qkdk", res.transmitter_key);
    }
    if (res.both_sides || res.role == Role::Receiver) {
        write_key_file(cfg.output_dir / "key_receiver.qkdk", res.receiver_key);
    }
}

} // namespace dqkd
