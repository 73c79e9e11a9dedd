#include "dqkd/session.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <mutex>
#include <tuple>

namespace dqkd {

void validate_reconciliation(const ReconciliationConfig& cfg) {
    if (cfg.block_bits < 64) throw ValidationError("reconciliation.block_bits", "must be >= 64");
    if (!(cfg.ldpc_efficiency >= 1.0)) {
        throw ValidationError("reconciliation.ldpc_efficiency", "must be >= 1");
    }
}

Seed32 session_code_seed(std::uint64_t session_id) noexcept {
    return seed_from_u64(splitmix64(session_id ^ 0x6c6470632d636f64ull));
}

const LdpcCode& cached_code(const Seed32& seed, std::uint32_t n, std::uint32_t m) {
    static std::mutex mutex;
    static std::map<std::tuple<Seed32, std::uint32_t, std::uint32_t>, std::unique_ptr<LdpcCode>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{seed, n, m}];
    if (!slot) slot = std::make_unique<LdpcCode>(build_code(seed, n, m));
    return *slot;
}

namespace {

constexpr std::uint8_t kStatusDecodeFailed = 0;
constexpr std::uint8_t kStatusMismatch = 1;
constexpr std::uint8_t kStatusVerified = 2;

Seed32 draw_seed(RandomStream& rng) {
    Seed32 s{};
    for (std::size_t i = 0; i < s.size(); i += 8) {
        const std::uint64_t v = rng.next_u64();
        for (std::size_t b = 0; b < 8; ++b) s[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
    }
    return s;
}

Seed32 read_seed(ByteReader& r) {
    const auto raw = r.bytes(32);
    Seed32 s{};
    std::copy(raw.begin(), raw.end(), s.begin());
    return s;
}

// Positions whose bits both parties reveal: the signal sample and every matched decoy.
std::vector<std::size_t> disclosed_positions(const SiftedBlock& block, const SampleSplit& split) {
    std::vector<std::size_t> out = split.sample;
    for (std::size_t i = 0; i < block.size(); ++i) {
        if (block.intensity[i] == IntensityClass::Decoy) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void expect_round(ByteReader& r, std::uint64_t round) {
    if (r.varint() != round) throw ProtocolError("frame belongs to a different round");
}

std::uint64_t sifted_bits_of(const SiftedBlock& block) {
    return static_cast<std::uint64_t>(std::count_if(block.intensity.begin(), block.intensity.end(),
                                                    [](IntensityClass c) { return c != IntensityClass::Vacuum; }));
}

} // namespace

Endpoint::Endpoint(Role role, SessionSettings settings) : role_(role), settings_(std::move(settings)) {
    validate_params(settings_.params);
    validate_reconciliation(settings_.reconciliation);
}

std::uint64_t Endpoint::leak_bits() const noexcept {
    std::uint64_t total = 0;
    for (const auto& b : blocks_) total += b.leak_bits;
    return total;
}

Frame Endpoint::make(FrameType type, std::vector<std::uint8_t> payload) {
    Frame f;
    f.type = type;
    f.session_id = settings_.session_id;
    f.sequence = next_send_seq_++;
    f.payload = std::move(payload);
    return f;
}

std::vector<std::vector<std::uint8_t>> Endpoint::emit(std::vector<Frame> frames) {
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(frames.size());
    for (auto& f : frames) {
        auto bytes = encode_frame(f);
        transcript_.push_back({true, bytes});
        out.push_back(std::move(bytes));
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> Endpoint::receive(std::span<const std::uint8_t> bytes) {
    if (aborted_) throw ProtocolError("endpoint already aborted: " + abort_reason_);
    transcript_.push_back({false, {bytes.begin(), bytes.end()}});
    std::vector<Frame> replies;
    try {
        const Frame in = decode_frame(bytes);
        if (in.session_id != settings_.session_id) throw ProtocolError("session id mismatch");
        if (in.sequence != next_recv_seq_) throw ProtocolError("out-of-sequence frame");
        ++next_recv_seq_;
        if (in.type == FrameType::Abort) {
            aborted_ = true;
            abort_reason_ = std::string(in.payload.begin(), in.payload.end());
            return {};
        }
        replies = on_frame(in);
    } catch (const Error& e) {
        aborted_ = true;
        abort_reason_ = e.what();
        const std::string reason = e.what();
        return emit({make(FrameType::Abort, {reason.begin(), reason.end()})});
    }
    return emit(std::move(replies));
}

Bits Endpoint::take_block() {
    const std::size_t n = settings_.reconciliation.block_bits;
    Bits out(carry_.begin(), carry_.begin() + static_cast<std::ptrdiff_t>(n));
    carry_.erase(carry_.begin(), carry_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

double Endpoint::prior_qber() const noexcept {
    return std::clamp(cumulative_[IntensityClass::Signal].error_rate(), 1e-3, 0.45);
}

std::uint32_t Endpoint::block_checks() const {
    return check_budget(settings_.reconciliation.ldpc_efficiency,
                        cumulative_[IntensityClass::Signal].error_rate(),
                        settings_.reconciliation.block_bits);
}

std::uint64_t Endpoint::block_final_length(std::uint64_t leak) const {
    try {
        const DecoyEstimate est = estimate_from_tally(cumulative_, settings_.params);
        return secure_key_length(settings_.reconciliation.block_bits, est, leak);
    } catch (const DomainError&) {
        return 0;
    }
}

void Endpoint::finish_round() {
    round_complete_ = true;
    ++round_;
    if (final_round_) {
        discarded_tail_ = carry_.size();
        carry_.clear();
        finished_ = true;
    }
}

// ---------------------------------------------------------------- transmitter

TransmitterEndpoint::TransmitterEndpoint(SessionSettings settings, RandomStream rng)
    : Endpoint(Role::Transmitter, std::move(settings)), rng_(rng),
      code_seed_(session_code_seed(settings_.session_id)) {}

void TransmitterEndpoint::begin_round(PreparedLog log, bool final_round) {
    if (finished_) throw ProtocolError("session already finished");
    if (!round_complete_) throw ProtocolError("previous round still open");
    log_ = std::move(log);
    final_round_ = final_round;
    round_complete_ = false;
    state_ = State::AwaitAnnounce;
}

std::vector<Frame> TransmitterEndpoint::on_frame(const Frame& in) {
    if (in.type == FrameType::BasisAnnounce && state_ == State::AwaitAnnounce) return on_announce(in);
    if (in.type == FrameType::SampleSeed && state_ == State::AwaitSeed) return on_sample_seed(in);
    if (in.type == FrameType::SampleBits && state_ == State::AwaitBits) return on_sample_bits(in);
    if (in.type == FrameType::EcHash && state_ == State::AwaitStatus) return on_block_status(in);
    throw ProtocolError("unexpected " + std::string(to_string(in.type)) + " frame");
}

std::vector<Frame> TransmitterEndpoint::on_announce(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    const bool final_flag = r.u8() != 0;
    const auto gates = r.delta_list();
    const Bits bases = r.bits();
    r.expect_done();
    if (final_flag != final_round_) throw ProtocolError("final-round flag disagrees");
    if (bases.size() != gates.size()) throw ProtocolError("basis list length mismatch");

    std::vector<Detection> report(gates.size());
    for (std::size_t i = 0; i < gates.size(); ++i) {
        report[i] = {gates[i], static_cast<Basis>(bases[i]), 0};
    }
    block_ = sift(report, log_);

    ByteWriter w;
    w.varint(round_);
    w.varint(gates.size());
    std::uint8_t acc = 0;
    for (std::size_t i = 0; i < gates.size(); ++i) {
        const PreparedGate g = *log_.find(gates[i]);
        std::uint8_t code = 0;
        if (g.intensity() == IntensityClass::Vacuum) {
            code = 3;
        } else if (g.basis() == report[i].basis) {
            code = g.intensity() == IntensityClass::Signal ? 1 : 2;
        }
        acc |= static_cast<std::uint8_t>(code << (2 * (i % 4)));
        if (i % 4 == 3) {
            w.u8(acc);
            acc = 0;
        }
    }
    if (gates.size() % 4 != 0) w.u8(acc);
    state_ = State::AwaitSeed;
    return {make(FrameType::MatchSet, w.take())};
}

std::vector<Frame> TransmitterEndpoint::on_sample_seed(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    const Seed32 seed = read_seed(r);
    r.expect_done();
    split_ = sample_split(block_, settings_.params.sample_fraction, seed);
    disclosed_ = disclosed_positions(block_, split_);
    state_ = State::AwaitBits;
    return {};
}

std::vector<Frame> TransmitterEndpoint::on_sample_bits(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    const Bits theirs = r.bits();
    r.expect_done();
    if (theirs.size() != disclosed_.size()) throw ProtocolError("sample bit count mismatch");
    for (std::size_t k = 0; k < disclosed_.size(); ++k) block_.bob_bits[disclosed_[k]] = theirs[k];

    const Tally t = tally(block_, split_, log_.sent_counts());

    std::vector<Frame> out;
    ByteWriter bits;
    bits.varint(round_);
    Bits mine(disclosed_.size());
    for (std::size_t k = 0; k < disclosed_.size(); ++k) mine[k] = block_.alice_bits[disclosed_[k]];
    bits.bits(mine);
    out.push_back(make(FrameType::SampleBits, bits.take()));

    ByteWriter rep;
    rep.varint(round_);
    for (const auto& c : t.by_class) {
        rep.varint(c.sent);
        rep.varint(c.detected);
        rep.varint(c.compared);
        rep.varint(c.errors);
    }
    out.push_back(make(FrameType::TallyReport, rep.take()));

    RoundSummary summary;
    summary.round = round_;
    summary.tally = t;
    summary.sifted_bits = sifted_bits_of(block_);
    summary.key_bits = split_.key.size();
    summary.disclosed_bits = disclosed_.size();
    rounds_.push_back(summary);
    cumulative_ += t;
    for (auto i : split_.key) carry_.push_back(block_.alice_bits[i]);

    blocks_left_ = blocks_ready();
    if (blocks_left_ == 0) {
        state_ = State::Idle;
        finish_round();
    } else {
        auto frames = start_block();
        for (auto& f : frames) out.push_back(std::move(f));
    }
    return out;
}

std::vector<Frame> TransmitterEndpoint::start_block() {
    const std::uint32_t n = settings_.reconciliation.block_bits;
    current_m_ = block_checks();
    current_.emplace(next_block_id_++, take_block());
    const LdpcCode& code = cached_code(code_seed_, n, current_m_);
    const Bits s = syndrome(code, current_->bits());

    ByteWriter syn;
    syn.u64(current_->id());
    syn.u32(n);
    syn.u32(current_m_);
    syn.bytes(code_seed_);
    syn.bits(s);

    std::uint64_t key = 0;
    while (key == 0) key = rng_.next_u64();
    ByteWriter hash;
    hash.u64(current_->id());
    hash.u64(key);
    hash.u64(poly_hash64(current_->bits(), key));
    current_->account_leak(current_m_ + kVerifyHashBits);

    state_ = State::AwaitStatus;
    return {make(FrameType::EcSyndrome, syn.take()), make(FrameType::EcHash, hash.take())};
}

std::vector<Frame> TransmitterEndpoint::on_block_status(const Frame& in) {
    ByteReader r(in.payload);
    const std::uint64_t id = r.u64();
    const std::uint8_t status = r.u8();
    r.expect_done();
    if (id != current_->id()) throw ProtocolError("block status for the wrong block");
    if (status > kStatusVerified) throw ProtocolError("unknown block status");

    BlockRecord rec;
    rec.id = id;
    rec.n = settings_.reconciliation.block_bits;
    rec.m = current_m_;
    rec.leak_bits = current_->leak_bits();

    std::vector<Frame> out;
    if (status == kStatusVerified) {
        const std::uint64_t len = block_final_length(current_->leak_bits());
        const Seed32 seed = draw_seed(rng_);
        Bits key = toeplitz_extract(seed, current_->bits(), len);
        current_->advance(BlockStatus::Verified);
        current_->advance(BlockStatus::Amplified, key);
        final_key_.insert(final_key_.end(), key.begin(), key.end());
        rec.outcome = BlockOutcome::Amplified;
        rec.final_bits = len;

        ByteWriter w;
        w.u64(id);
        w.bytes(seed);
        w.u32(static_cast<std::uint32_t>(len));
        out.push_back(make(FrameType::PaSeed, w.take()));
    } else {
        current_->advance(BlockStatus::Discarded);
        rec.outcome = status == kStatusDecodeFailed ? BlockOutcome::DecodeFailed : BlockOutcome::HashMismatch;
    }
    blocks_.push_back(rec);
    current_.reset();

    if (--blocks_left_ == 0) {
        state_ = State::Idle;
        finish_round();
    } else {
        auto frames = start_block();
        for (auto& f : frames) out.push_back(std::move(f));
    }
    return out;
}

// ------------------------------------------------------------------- receiver

ReceiverEndpoint::ReceiverEndpoint(SessionSettings settings, RandomStream rng)
    : Endpoint(Role::Receiver, std::move(settings)), rng_(rng) {}

std::vector<std::vector<std::uint8_t>> ReceiverEndpoint::begin_round(std::vector<Detection> detections,
                                                                     bool final_round) {
    if (finished_) throw ProtocolError("session already finished");
    if (!round_complete_) throw ProtocolError("previous round still open");
    std::sort(detections.begin(), detections.end(),
              [](const Detection& a, const Detection& b) { return a.gate < b.gate; });
    detections_ = std::move(detections);
    final_round_ = final_round;
    round_complete_ = false;

    std::vector<std::uint64_t> gates(detections_.size());
    Bits bases(detections_.size());
    for (std::size_t i = 0; i < detections_.size(); ++i) {
        gates[i] = detections_[i].gate;
        bases[i] = static_cast<std::uint8_t>(detections_[i].basis);
    }
    ByteWriter w;
    w.varint(round_);
    w.u8(final_round ? 1 : 0);
    w.delta_list(gates);
    w.bits(bases);
    state_ = State::AwaitMatch;
    return emit({make(FrameType::BasisAnnounce, w.take())});
}

std::vector<Frame> ReceiverEndpoint::on_frame(const Frame& in) {
    if (in.type == FrameType::MatchSet && state_ == State::AwaitMatch) return on_match_set(in);
    if (in.type == FrameType::SampleBits && state_ == State::AwaitBits) return on_sample_bits(in);
    if (in.type == FrameType::TallyReport && state_ == State::AwaitTally) return on_tally(in);
    if (in.type == FrameType::EcSyndrome && state_ == State::AwaitSyndrome) return on_syndrome(in);
    if (in.type == FrameType::EcHash && state_ == State::AwaitHash) return on_hash(in);
    if (in.type == FrameType::PaSeed && state_ == State::AwaitPaSeed) return on_pa_seed(in);
    throw ProtocolError("unexpected " + std::string(to_string(in.type)) + " frame");
}

std::vector<Frame> ReceiverEndpoint::on_match_set(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    const std::uint64_t count = r.varint();
    if (count != detections_.size()) throw ProtocolError("match set length mismatch");
    const auto packed = r.bytes((count + 3) / 4);
    r.expect_done();

    block_ = SiftedBlock{};
    block_.reported = count;
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned code = (packed[i / 4] >> (2 * (i % 4))) & 3u;
        if (code == 0) continue;
        const auto cls = code == 1 ? IntensityClass::Signal
                                   : (code == 2 ? IntensityClass::Decoy : IntensityClass::Vacuum);
        block_.gates.push_back(detections_[i].gate);
        block_.intensity.push_back(cls);
        block_.basis.push_back(detections_[i].basis);
        block_.alice_bits.push_back(0);
        block_.bob_bits.push_back(detections_[i].bit);
        block_.partition.push_back(Partition::None);
    }

    const Seed32 seed = draw_seed(rng_);
    split_ = sample_split(block_, settings_.params.sample_fraction, seed);
    disclosed_ = disclosed_positions(block_, split_);

    ByteWriter s;
    s.varint(round_);
    s.bytes(seed);
    ByteWriter b;
    b.varint(round_);
    Bits mine(disclosed_.size());
    for (std::size_t k = 0; k < disclosed_.size(); ++k) mine[k] = block_.bob_bits[disclosed_[k]];
    b.bits(mine);
    state_ = State::AwaitBits;
    return {make(FrameType::SampleSeed, s.take()), make(FrameType::SampleBits, b.take())};
}

std::vector<Frame> ReceiverEndpoint::on_sample_bits(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    const Bits theirs = r.bits();
    r.expect_done();
    if (theirs.size() != disclosed_.size()) throw ProtocolError("sample bit count mismatch");
    for (std::size_t k = 0; k < disclosed_.size(); ++k) block_.alice_bits[disclosed_[k]] = theirs[k];

    own_counts_ = Tally{};
    auto& sig = own_counts_[IntensityClass::Signal];
    for (auto i : split_.sample) {
        ++sig.compared;
        sig.errors += block_.alice_bits[i] != block_.bob_bits[i] ? 1 : 0;
    }
    auto& dec = own_counts_[IntensityClass::Decoy];
    for (std::size_t i = 0; i < block_.size(); ++i) {
        if (block_.intensity[i] != IntensityClass::Decoy) continue;
        ++dec.compared;
        dec.errors += block_.alice_bits[i] != block_.bob_bits[i] ? 1 : 0;
    }
    state_ = State::AwaitTally;
    return {};
}

std::vector<Frame> ReceiverEndpoint::on_tally(const Frame& in) {
    ByteReader r(in.payload);
    expect_round(r, round_);
    Tally t;
    for (auto& c : t.by_class) {
        c.sent = r.varint();
        c.detected = r.varint();
        c.compared = r.varint();
        c.errors = r.varint();
    }
    r.expect_done();
    for (std::size_t c = 0; c < 3; ++c) {
        if (t.by_class[c].compared != own_counts_.by_class[c].compared ||
            t.by_class[c].errors != own_counts_.by_class[c].errors) {
            throw ProtocolError("tally report disagrees with the disclosed comparisons");
        }
        if (t.by_class[c].detected > t.by_class[c].sent) throw ProtocolError("tally report inconsistent");
        block_.detected[c] = t.by_class[c].detected;
    }
    const std::uint64_t detected = t.by_class[0].detected + t.by_class[1].detected + t.by_class[2].detected;
    if (detected != detections_.size()) throw ProtocolError("tally report detection count mismatch");

    RoundSummary summary;
    summary.round = round_;
    summary.tally = t;
    summary.sifted_bits = sifted_bits_of(block_);
    summary.key_bits = split_.key.size();
    summary.disclosed_bits = disclosed_.size();
    rounds_.push_back(summary);
    cumulative_ += t;
    for (auto i : split_.key) carry_.push_back(block_.bob_bits[i]);

    blocks_left_ = blocks_ready();
    if (blocks_left_ == 0) {
        state_ = State::Idle;
        finish_round();
    } else {
        state_ = State::AwaitSyndrome;
    }
    return {};
}

std::vector<Frame> ReceiverEndpoint::on_syndrome(const Frame& in) {
    ByteReader r(in.payload);
    const std::uint64_t id = r.u64();
    const std::uint32_t n = r.u32();
    const std::uint32_t m = r.u32();
    const Seed32 seed = read_seed(r);
    const Bits s = r.bits();
    r.expect_done();
    if (id != next_block_id_) throw ProtocolError("unexpected block id");
    if (n != settings_.reconciliation.block_bits) throw ProtocolError("block length disagrees");
    if (m != block_checks()) throw ProtocolError("syndrome length disagrees with the check budget");
    if (s.size() != m) throw ProtocolError("syndrome size mismatch");

    ++next_block_id_;
    current_m_ = m;
    current_.emplace(id, take_block());
    const LdpcCode& code = cached_code(seed, n, m);
    decoded_ = decode(code, current_->bits(), s, prior_qber());
    current_corrections_ = 0;
    if (decoded_) {
        for (std::size_t i = 0; i < n; ++i) {
            current_corrections_ += decoded_->bits[i] != current_->bits()[i] ? 1 : 0;
        }
        current_->advance(BlockStatus::Corrected, decoded_->bits);
    }
    state_ = State::AwaitHash;
    return {};
}

std::vector<Frame> ReceiverEndpoint::on_hash(const Frame& in) {
    ByteReader r(in.payload);
    const std::uint64_t id = r.u64();
    const std::uint64_t key = r.u64();
    const std::uint64_t hash = r.u64();
    r.expect_done();
    if (id != current_->id()) throw ProtocolError("hash for the wrong block");
    current_->account_leak(current_m_ + kVerifyHashBits);

    std::uint8_t status = kStatusDecodeFailed;
    if (decoded_) status = verify(current_->bits(), hash, key) ? kStatusVerified : kStatusMismatch;

    BlockRecord rec;
    rec.id = id;
    rec.n = settings_.reconciliation.block_bits;
    rec.m = current_m_;
    rec.leak_bits = current_->leak_bits();
    rec.outcome = status == kStatusVerified
                      ? BlockOutcome::Amplified
                      : (status == kStatusMismatch ? BlockOutcome::HashMismatch : BlockOutcome::DecodeFailed);
    if (decoded_) {
        rec.decode_iterations = decoded_->iterations;
        rec.corrected_errors = current_corrections_;
    }
    blocks_.push_back(rec);

    ByteWriter w;
    w.u64(id);
    w.u8(status);
    std::vector<Frame> out{make(FrameType::EcHash, w.take())};
    if (status == kStatusVerified) {
        current_->advance(BlockStatus::Verified);
        state_ = State::AwaitPaSeed;
    } else {
        current_->advance(BlockStatus::Discarded);
        after_block();
    }
    return out;
}

std::vector<Frame> ReceiverEndpoint::on_pa_seed(const Frame& in) {
    ByteReader r(in.payload);
    const std::uint64_t id = r.u64();
    const Seed32 seed = read_seed(r);
    const std::uint32_t len = r.u32();
    r.expect_done();
    if (id != current_->id()) throw ProtocolError("PA seed for the wrong block");
    if (len != block_final_length(current_->leak_bits())) {
        throw ProtocolError("final key length disagrees with the shared estimate");
    }
    Bits key = toeplitz_extract(seed, current_->bits(), len);
    current_->advance(BlockStatus::Amplified, key);
    final_key_.insert(final_key_.end(), key.begin(), key.end());
    blocks_.back().final_bits = len;
    after_block();
    return {};
}

void ReceiverEndpoint::after_block() {
    current_.reset();
    decoded_.reset();
    if (--blocks_left_ == 0) {
        state_ = State::Idle;
        finish_round();
    } else {
        state_ = State::AwaitSyndrome;
    }
}

// ------------------------------------------------------------------- drivers

void drive_round(Endpoint& endpoint, Transport& transport,
                 std::vector<std::vector<std::uint8_t>> initial) {
    for (const auto& bytes : initial) transport.send(bytes);
    while (!endpoint.round_complete() && !endpoint.aborted()) {
        const auto bytes = transport.receive_frame();
        for (const auto& reply : endpoint.receive(bytes)) transport.send(reply);
    }
    if (endpoint.aborted()) throw ProtocolError("session aborted: " + endpoint.abort_reason());
}

void drive_round_local(TransmitterEndpoint& tx, ReceiverEndpoint& rx,
                       std::vector<std::vector<std::uint8_t>> announce) {
    std::deque<std::pair<Endpoint*, std::vector<std::uint8_t>>> queue;
    for (auto& b : announce) queue.emplace_back(&tx, std::move(b));
    while (!queue.empty()) {
        auto [target, bytes] = std::move(queue.front());
        queue.pop_front();
        Endpoint* peer = target == static_cast<Endpoint*>(&tx) ? static_cast<Endpoint*>(&rx)
                                                               : static_cast<Endpoint*>(&tx);
        for (auto& reply : target->receive(bytes)) queue.emplace_back(peer, std::move(reply));
    }
    for (const Endpoint* e : {static_cast<const Endpoint*>(&tx), static_cast<const Endpoint*>(&rx)}) {
        if (e->aborted()) throw ProtocolError("session aborted: " + e->abort_reason());
    }
    if (!tx.round_complete() || !rx.round_complete()) throw ProtocolError("round stalled");
}

} // namespace dqkd
