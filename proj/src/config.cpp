#include "dqkd/orchestrator.hpp"
#include "dqkd/presets.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dqkd {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking the dotted path for error messages and
// rejecting keys that were never consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    const json& at(std::string_view key) {
        const std::string k(key);
        auto it = j_.find(k);
        if (it == j_.end()) throw ValidationError(field(key), "missing required field");
        used_.insert(k);
        return *it;
    }

    Section child(std::string_view key) { return Section(at(key), field(key)); }

    double number(std::string_view key) {
        const json& v = at(key);
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            try {
                return parse_exact_decimal(v.get<std::string>());
            } catch (const DomainError& e) {
                throw ValidationError(field(key), e.what());
            }
        }
        throw ValidationError(field(key), "expected a number");
    }

    std::uint64_t integer(std::string_view key) {
        const json& v = at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            std::uint64_t out = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec == std::errc{} && ptr == s.data() + s.size()) return out;
        }
        throw ValidationError(field(key), "expected a non-negative integer");
    }

    bool boolean(std::string_view key) {
        const json& v = at(key);
        if (!v.is_boolean()) throw ValidationError(field(key), "expected true or false");
        return v.get<bool>();
    }

    std::string text(std::string_view key) {
        const json& v = at(key);
        if (!v.is_string()) throw ValidationError(field(key), "expected a string");
        return v.get<std::string>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) throw ValidationError(field(it.key()), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

AxisDisturbance read_axis(Section s) {
    AxisDisturbance d;
    d.white_sigma_um = s.number("white_sigma_um");
    const json& lines = s.at("sinusoids");
    if (!lines.is_array()) throw ValidationError(s.field("sinusoids"), "expected an array");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Section line(lines[i], s.field("sinusoids") + "[" + std::to_string(i) + "]");
        d.sinusoids.push_back({line.number("amplitude_um"), line.number("frequency_hz")});
        line.finish();
    }
    s.finish();
    return d;
}

TrackingConfig read_tracking(Section s) {
    TrackingConfig t;
    t.loop_rate_coarse = s.number("loop_rate_coarse");
    t.loop_rate_fine = s.number("loop_rate_fine");
    t.coarse = {s.number("coarse_kp"), s.number("coarse_ki")};
    t.fine = {s.number("fine_kp"), s.number("fine_ki")};
    t.fine_fov_um = s.number("fine_fov_um");
    t.mode_field_radius_um = s.number("mode_field_radius_um");
    t.divergence_limit_um = s.number("divergence_limit_um");
    t.disturbance_x = read_axis(s.child("disturbance_x"));
    t.disturbance_y = read_axis(s.child("disturbance_y"));
    s.finish();
    return t;
}

RunConfig read_config(const json& root) {
    RunConfig cfg;
    Section top(root, "");

    Section p = top.child("protocol");
    auto& pp = cfg.protocol;
    pp.mu_signal = p.number("mu_signal");
    pp.mu_decoy = p.number("mu_decoy");
    pp.mu_vacuum = p.number("mu_vacuum");
    pp.p_signal = p.number("p_signal");
    pp.p_decoy = p.number("p_decoy");
    pp.p_vacuum = p.number("p_vacuum");
    pp.gate_rate = p.number("gate_rate");
    pp.gate_width = p.number("gate_width_s");
    pp.basis_factor_q = p.number("basis_factor_q");
    pp.sample_fraction = p.number("sample_fraction");
    pp.ec_efficiency_f = p.number("ec_efficiency_f");
    p.finish();

    Section l = top.child("link");
    cfg.budget.link_loss_db = l.number("link_loss_db");
    cfg.budget.projection_loss_db = l.number("projection_loss_db");
    cfg.budget.detection_loss_db = l.number("detection_loss_db");
    cfg.budget.other_optics_loss_db = l.number("other_optics_loss_db");
    cfg.unmodeled_loss_db = l.number("unmodeled_loss_db");
    cfg.budget.distance_m = l.number("distance_m");
    cfg.budget.beam_aperture_fwhm_mm = l.number("beam_aperture_fwhm_mm");
    cfg.budget.rayleigh_length_m = l.number("rayleigh_length_m");
    l.finish();

    Section c = top.child("channel");
    cfg.extinction_ratio = c.number("extinction_ratio");
    cfg.background_rate = c.number("background_rate");
    cfg.timing_jitter_sigma = c.number("timing_jitter_s");
    cfg.source_jitter_sigma = c.number("source_jitter_s");
    c.finish();

    Section d = top.child("detector");
    cfg.detector.efficiency = d.number("efficiency");
    cfg.detector.dark_rate = d.number("dark_rate");
    cfg.detector.dead_time = d.number("dead_time_s");
    cfg.detector.tdc_resolution = d.number("tdc_resolution_s");
    d.finish();

    Section k = top.child("clock");
    cfg.receiver_clock.offset = k.number("offset_s");
    cfg.receiver_clock.drift = k.number("drift");
    k.finish();

    Section y = top.child("sync");
    cfg.sync.detection_probability = y.number("detection_probability");
    cfg.sync.jitter_sigma = y.number("jitter_s");
    y.finish();

    Section t = top.child("tracking");
    cfg.tracking_enabled = t.boolean("enabled");
    cfg.drone = read_tracking(t.child("drone"));
    cfg.ground = read_tracking(t.child("ground"));
    t.finish();

    Section r = top.child("reconciliation");
    const std::uint64_t block = r.integer("block_bits");
    if (block > (1u << 24)) throw ValidationError(r.field("block_bits"), "too large");
    cfg.reconciliation.block_bits = static_cast<std::uint32_t>(block);
    cfg.reconciliation.ldpc_efficiency = r.number("ldpc_efficiency");
    r.finish();

    Section s = top.child("session");
    cfg.duration_s = s.number("duration_s");
    cfg.window_s = s.number("window_s");
    s.finish();

    Section seeds = top.child("seeds");
    cfg.seeds.transmitter = seeds.integer("transmitter");
    cfg.seeds.channel = seeds.integer("channel");
    cfg.seeds.receiver = seeds.integer("receiver");
    cfg.seeds.sampling = seeds.integer("sampling");
    cfg.seeds.tracking = seeds.integer("tracking");
    seeds.finish();

    Section tr = top.child("transport");
    const std::string mode = tr.text("mode");
    if (mode == "in_process") {
        cfg.transport.mode = TransportMode::InProcess;
    } else if (mode == "socket") {
        cfg.transport.mode = TransportMode::Socket;
    } else {
        throw ValidationError(tr.field("mode"), "expected \"in_process\" or \"socket\"");
    }
    cfg.transport.address = tr.text("address");
    tr.finish();

    cfg.output_dir = top.text("output_dir");
    top.finish();
    return cfg;
}

// Re-raises a nested validator's error with the config path of its field.
template <class F>
void within(const std::string& prefix, F&& check,
            std::initializer_list<std::pair<std::string_view, std::string_view>> renames = {}) {
    try {
        check();
    } catch (const ValidationError& e) {
        std::string name = e.field();
        for (auto [from, to] : renames) {
            if (name == from) name = std::string(to);
        }
        std::string message = e.what();
        const std::string lead = e.field() + ": ";
        if (message.rfind(lead, 0) == 0) message.erase(0, lead.size());
        throw ValidationError(prefix + name, message);
    }
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
}

} // namespace

ChannelState RunConfig::channel_state() const {
    ChannelState ch;
    ch.budget = budget;
    ch.unmodeled_loss_db = unmodeled_loss_db;
    ch.extinction_ratio = extinction_ratio;
    ch.background_rate = background_rate;
    ch.timing_jitter_sigma = timing_jitter_sigma;
    return ch;
}

void validate_config(const RunConfig& cfg) {
    within("protocol.", [&] { validate_params(cfg.protocol); }, {{"gate_width", "gate_width_s"}});
    within("link.", [&] { validate_budget(cfg.budget); });
    require(cfg.unmodeled_loss_db >= 0.0, "link.unmodeled_loss_db", "must be >= 0");
    within("channel.", [&] { validate_channel(cfg.channel_state()); },
           {{"timing_jitter_sigma", "timing_jitter_s"}});
    require(cfg.source_jitter_sigma >= 0.0, "channel.source_jitter_s", "must be >= 0");
    within("detector.", [&] { validate_detector(cfg.detector, cfg.budget); },
           {{"dead_time", "dead_time_s"}, {"tdc_resolution", "tdc_resolution_s"}});
    require(std::isfinite(cfg.receiver_clock.offset) && cfg.receiver_clock.offset >= 0.0,
            "clock.offset_s", "must be finite and >= 0");
    require(std::abs(cfg.receiver_clock.drift) < 1e-4, "clock.drift", "magnitude must be below 1e-4");
    require(cfg.sync.detection_probability > 0.0 && cfg.sync.detection_probability <= 1.0,
            "sync.detection_probability", "must lie in (0,1]");
    require(cfg.sync.jitter_sigma >= 0.0, "sync.jitter_s", "must be >= 0");
    within("tracking.drone.", [&] { validate_tracking(cfg.drone); });
    within("tracking.ground.", [&] { validate_tracking(cfg.ground); });
    require(cfg.drone.loop_rate_fine == cfg.ground.loop_rate_fine, "tracking.ground.loop_rate_fine",
            "must equal the drone fine loop rate");
    validate_reconciliation(cfg.reconciliation);
    require(cfg.duration_s > 0.0 && std::isfinite(cfg.duration_s), "session.duration_s", "must be > 0");
    require(cfg.window_s > 0.0 && std::isfinite(cfg.window_s), "session.window_s", "must be > 0");
    const double syncs = cfg.window_s * cfg.protocol.gate_rate * cfg.sync.detection_probability;
    require(syncs >= 2.0 * static_cast<double>(kMinSyncPulses), "session.window_s",
            "too short to recover the gate clock at this gate rate");
    if (cfg.transport.mode == TransportMode::Socket) {
        const auto colon = cfg.transport.address.rfind(':');
        require(colon != std::string::npos && colon > 0 && colon + 1 < cfg.transport.address.size(),
                "transport.address", "expected host:port");
    }
    require(!cfg.output_dir.empty(), "output_dir", "must not be empty");
}

RunConfig parse_config(std::string_view text, std::string_view source) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        // Translate the byte offset into a line and column.
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ValidationError(std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col),
                              "parse error: " + std::string(e.what()));
    }
    RunConfig cfg = read_config(root);
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::vector<std::string> preset_names() { return {"paper-defaults", "qber-calibrated"}; }

std::string_view preset_text(std::string_view name) {
    if (name == "paper-defaults") return presets::kPaperDefaults;
    if (name == "qber-calibrated") return presets::kQberCalibrated;
    throw Error("unknown preset '" + std::string(name) + "'");
}

RunConfig preset_config(std::string_view name) {
    return parse_config(preset_text(name), "preset " + std::string(name));
}

namespace {

json axis_json(const AxisDisturbance& d) {
    json lines = json::array();
    for (const auto& s : d.sinusoids) {
        lines.push_back({{"amplitude_um", s.amplitude_um}, {"frequency_hz", s.frequency_hz}});
    }
    return {{"white_sigma_um", d.white_sigma_um}, {"sinusoids", lines}};
}

json tracking_json(const TrackingConfig& t) {
    return {{"loop_rate_coarse", t.loop_rate_coarse},
            {"loop_rate_fine", t.loop_rate_fine},
            {"coarse_kp", t.coarse.kp},
            {"coarse_ki", t.coarse.ki},
            {"fine_kp", t.fine.kp},
            {"fine_ki", t.fine.ki},
            {"fine_fov_um", t.fine_fov_um},
            {"mode_field_radius_um", t.mode_field_radius_um},
            {"divergence_limit_um", t.divergence_limit_um},
            {"disturbance_x", axis_json(t.disturbance_x)},
            {"disturbance_y", axis_json(t.disturbance_y)}};
}

} // namespace

std::string config_to_json(const RunConfig& cfg) {
    const auto& p = cfg.protocol;
    json j;
    j["protocol"] = {{"mu_signal", p.mu_signal},
                     {"mu_decoy", p.mu_decoy},
                     {"mu_vacuum", p.mu_vacuum},
                     {"p_signal", p.p_signal},
                     {"p_decoy", p.p_decoy},
                     {"p_vacuum", p.p_vacuum},
                     {"gate_rate", p.gate_rate},
                     {"gate_width_s", p.gate_width},
                     {"basis_factor_q", p.basis_factor_q},
                     {"sample_fraction", p.sample_fraction},
                     {"ec_efficiency_f", p.ec_efficiency_f}};
    j["link"] = {{"link_loss_db", cfg.budget.link_loss_db},
                 {"projection_loss_db", cfg.budget.projection_loss_db},
                 {"detection_loss_db", cfg.budget.detection_loss_db},
                 {"other_optics_loss_db", cfg.budget.other_optics_loss_db},
                 {"unmodeled_loss_db", cfg.unmodeled_loss_db},
                 {"distance_m", cfg.budget.distance_m},
                 {"beam_aperture_fwhm_mm", cfg.budget.beam_aperture_fwhm_mm},
                 {"rayleigh_length_m", cfg.budget.rayleigh_length_m}};
    j["channel"] = {{"extinction_ratio", cfg.extinction_ratio},
                    {"background_rate", cfg.background_rate},
                    {"timing_jitter_s", cfg.timing_jitter_sigma},
                    {"source_jitter_s", cfg.source_jitter_sigma}};
    j["detector"] = {{"efficiency", cfg.detector.efficiency},
                     {"dark_rate", cfg.detector.dark_rate},
                     {"dead_time_s", cfg.detector.dead_time},
                     {"tdc_resolution_s", cfg.detector.tdc_resolution}};
    j["clock"] = {{"offset_s", cfg.receiver_clock.offset}, {"drift", cfg.receiver_clock.drift}};
    j["sync"] = {{"detection_probability", cfg.sync.detection_probability},
                 {"jitter_s", cfg.sync.jitter_sigma}};
    j["tracking"] = {{"enabled", cfg.tracking_enabled},
                     {"drone", tracking_json(cfg.drone)},
                     {"ground", tracking_json(cfg.ground)}};
    j["reconciliation"] = {{"block_bits", cfg.reconciliation.block_bits},
                           {"ldpc_efficiency", cfg.reconciliation.ldpc_efficiency}};
    j["session"] = {{"duration_s", cfg.duration_s}, {"window_s", cfg.window_s}};
    j["seeds"] = {{"transmitter", cfg.seeds.transmitter},
                  {"channel", cfg.seeds.channel},
                  {"receiver", cfg.seeds.receiver},
                  {"sampling", cfg.seeds.sampling},
                  {"tracking", cfg.seeds.tracking}};
    j["transport"] = {{"mode", cfg.transport.mode == TransportMode::Socket ? "socket" : "in_process"},
                      {"address", cfg.transport.address}};
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2) + "\n";
}

void apply_master_seed(RunConfig& cfg, std::uint64_t master) {
    const RandomStream root(master);
    cfg.seeds.transmitter = root.derive("transmitter").next_u64();
    cfg.seeds.channel = root.derive("channel").next_u64();
    cfg.seeds.receiver = root.derive("receiver").next_u64();
    cfg.seeds.sampling = root.derive("sampling").next_u64();
    cfg.seeds.tracking = root.derive("tracking").next_u64();
}

std::uint64_t session_id_for(const RunConfig& cfg) noexcept {
    std::uint64_t h = 0x71646b2d73657373ull;
    for (auto s : {cfg.seeds.transmitter, cfg.seeds.channel, cfg.seeds.receiver, cfg.seeds.sampling,
                   cfg.seeds.tracking}) {
        h = splitmix64(h ^ s);
    }
    return h;
}

} // namespace dqkd
