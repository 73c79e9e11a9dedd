#pragma once

#include "dqkd/channel.hpp"
#include "dqkd/core.hpp"
#include "dqkd/decoy.hpp"
#include "dqkd/detector.hpp"
#include "dqkd/session.hpp"
#include "dqkd/timesync.hpp"
#include "dqkd/tracking.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dqkd {

struct SyncConfig {
    double detection_probability = 0.9; // fraction of sync pulses registered
    double jitter_sigma = 50e-12;       // s
};

struct Seeds {
    std::uint64_t transmitter = 1;
    std::uint64_t channel = 2;
    std::uint64_t receiver = 3;
    std::uint64_t sampling = 4;
    std::uint64_t tracking = 5;
};

enum class TransportMode : std::uint8_t { InProcess, Socket };

struct TransportConfig {
    TransportMode mode = TransportMode::InProcess;
    std::string address; // host:port in socket mode
};

struct RunConfig {
    ProtocolParams protocol;
    LinkBudget budget;
    double unmodeled_loss_db = 0.0;
    double extinction_ratio = 30.0;
    double background_rate = 2000.0;
    double timing_jitter_sigma = 30e-12;
    double source_jitter_sigma = kDefaultSourceJitter;
    DetectorConfig detector;
    ReceiverClock receiver_clock;
    SyncConfig sync;
    bool tracking_enabled = true;
    TrackingConfig drone;
    TrackingConfig ground;
    ReconciliationConfig reconciliation;
    double duration_s = 400.0;
    double window_s = 10.0;
    Seeds seeds;
    TransportConfig transport;
    std::filesystem::path output_dir = "out";

    ChannelState channel_state() const;
};

/// Throws ValidationError naming the offending field path.
void validate_config(const RunConfig& cfg);

/// JSON config. Every field is required; numbers may be written as strings,
/// including rationals such as "1/4". Errors name the line or the field path.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> preset_names();
std::string_view preset_text(std::string_view name);
RunConfig preset_config(std::string_view name);

/// Serializes a config in the same schema parse_config reads.
std::string config_to_json(const RunConfig& cfg);

/// Replaces every per-module seed with one derived from `master`.
void apply_master_seed(RunConfig& cfg, std::uint64_t master);

std::uint64_t session_id_for(const RunConfig& cfg) noexcept;

struct WindowMetrics {
    double window_start_s = 0.0;
    std::uint64_t sifted_bits = 0;
    double sifted_rate_hz = 0.0;
    double sampled_qber = 0.0;
    double secure_rate_hz = 0.0;
    double drone_rms_x = 0.0;
    double drone_rms_y = 0.0;
    double ground_rms_x = 0.0;
    double ground_rms_y = 0.0;
};

struct ClockFit {
    std::uint64_t window = 0;
    ClockModel model;
    std::int64_t gate_lag = 0;
};

/// Simulation-side counters. Fields marked oracle use ground truth.
struct PhysicsStats {
    std::uint64_t gates = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t clicks = 0;           // after dead time
    std::uint64_t gated_clicks = 0;
    std::uint64_t detected_gates = 0;
    std::uint64_t multi_click_gates = 0;
    std::uint64_t cross_basis_gates = 0;
    std::uint64_t signal_clicks_gated = 0;  // oracle
    std::uint64_t signal_clicks_correct = 0; // oracle: assigned their emitting gate
    std::uint64_t noise_clicks_gated = 0;   // oracle
    std::uint64_t clipped = 0;
    std::uint64_t sync_pulses = 0;
    std::uint64_t lock_lost_samples = 0;

    PhysicsStats& operator+=(const PhysicsStats& o) noexcept;
};

/// Pointing state shared by all windows of a run.
struct PointingTrace {
    CouplingProfile profile;
    double mean_coupling = 1.0;
    std::vector<AxisRms> drone_rms;  // per window
    std::vector<AxisRms> ground_rms; // per window
    std::uint64_t lock_lost_samples = 0;
};

PointingTrace simulate_pointing(const RunConfig& cfg);

struct WindowPlan {
    std::uint64_t index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::uint64_t first_gate = 0;
    std::uint64_t n_gates = 0;
    bool complete = true; // false for a trailing partial window
};

/// Whole windows of window_s, plus a trailing partial one when the duration
/// is not a multiple.
std::vector<WindowPlan> plan_windows(const RunConfig& cfg);

struct WindowPhysics {
    PreparedLog log;                 // transmitter view
    std::vector<Detection> detections; // receiver view after gating and squashing
    ClockFit clock;
    PhysicsStats stats;
};

/// Transmitter, channel, receiver and timing recovery for one window.
WindowPhysics simulate_window(const RunConfig& cfg, const PointingTrace& pointing,
                              const WindowPlan& plan);

/// Combines the clicks of one gate into a single (basis, bit). Clicks in both
/// bases pick a basis at random; two bits within the basis pick a bit at random.
Detection squash(std::uint64_t gate, unsigned fired_mask, RandomStream& rng);

struct FrameAudit {
    std::array<std::uint64_t, 10> frames_by_type{}; // indexed by type tag
    std::array<std::uint64_t, 10> bytes_by_type{};
    std::uint64_t rounds = 0;
    std::uint64_t disclosed_bits_expected = 0;
    std::uint64_t disclosed_bits_observed = 0;
    std::uint64_t key_bits_disclosed = 0;  // disclosed positions that were key material
    std::uint64_t syndrome_bits = 0;
    std::uint64_t hash_bits = 0;
    std::uint64_t hygiene_violations = 0;

    std::uint64_t leak_bits() const noexcept { return syndrome_bits + hash_bits; }
};

/// Replays a transcript independently of the endpoints: recomputes every
/// round's sample from the disclosed seed and checks that exactly the sample
/// and decoy positions were revealed and nothing from the key remainder.
FrameAudit audit_transcript(std::span<const TranscriptEntry> transcript, Role perspective,
                            double sample_fraction);

struct SessionResult {
    Role role = Role::Transmitter; // side whose view is reported (both in-process)
    bool both_sides = false;
    std::vector<WindowPlan> windows;
    std::vector<RoundSummary> rounds;
    std::vector<WindowMetrics> metrics;
    Tally tally;
    std::optional<DecoyEstimate> estimate;
    std::string estimate_error;
    std::vector<BlockRecord> blocks;
    Bits transmitter_key;
    Bits receiver_key;
    bool keys_identical = false;
    std::uint64_t leak_bits_accounted = 0;
    FrameAudit audit;
    std::vector<ClockFit> clock_fits;
    PhysicsStats stats;
    std::uint64_t sifted_bits_total = 0;
    std::uint64_t discarded_tail_bits = 0;
    std::uint64_t transcript_digest = 0;
    std::vector<TranscriptEntry> transcript;
    double mean_coupling = 1.0;
};

/// Both endpoints in this process.
SessionResult run_session(const RunConfig& cfg);

/// One endpoint of a two-process session over the given transport.
SessionResult run_session_endpoint(const RunConfig& cfg, Role role, Transport& transport);

/// Rows from per-round summaries; partial windows are dropped.
std::vector<WindowMetrics> window_metrics(std::span<const RoundSummary> rounds,
                                          std::span<const WindowPlan> windows,
                                          const PointingTrace* pointing, const ProtocolParams& params,
                                          double window_s);

/// CSV with header t_s,sifted_bits,sifted_hz,qber,secure_hz,drone_rms_x,...
void emit_metrics(std::ostream& os, std::span<const WindowMetrics> rows);

/// Structured `key = value` text grouped in [sections].
void write_audit(std::ostream& os, const RunConfig& cfg, const SessionResult& result);

/// metrics.csv, tally.csv, audit.txt and the key file(s) under cfg.output_dir.
void write_outputs(const RunConfig& cfg, const SessionResult& result);

/// Expected per-gate background yield from dark counts and gated background.
double predicted_noise_yield(const RunConfig& cfg) noexcept;

/// Closed-form channel matching a config, for predictions.
AnalyticChannel analytic_channel(const RunConfig& cfg);

} // namespace dqkd
