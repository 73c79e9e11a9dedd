#pragma once

#include "dqkd/decoy.hpp"
#include "dqkd/postprocessing.hpp"
#include "dqkd/protocol.hpp"
#include "dqkd/random.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dqkd {

struct ReconciliationConfig {
    std::uint32_t block_bits = 4096;
    /// Efficiency used to size each block's syndrome. The regular column-weight-3
    /// code needs roughly 1.8 at 2-3% QBER to stay under 1% decode failures.
    double ldpc_efficiency = 1.8;
};

void validate_reconciliation(const ReconciliationConfig& cfg);

struct SessionSettings {
    std::uint64_t session_id = 0;
    ProtocolParams params;
    ReconciliationConfig reconciliation;
};

enum class Role : std::uint8_t { Transmitter, Receiver };

struct TranscriptEntry {
    bool outgoing = false;
    std::vector<std::uint8_t> bytes;
};

/// Per-round statistics agreed by both parties after TALLY_REPORT.
struct RoundSummary {
    std::uint64_t round = 0;
    Tally tally;
    std::uint64_t sifted_bits = 0; // basis-matched signal + decoy
    std::uint64_t key_bits = 0;    // signal positions outside the sample
    std::uint64_t disclosed_bits = 0;

    double sampled_qber() const noexcept { return tally[IntensityClass::Signal].error_rate(); }
};

enum class BlockOutcome : std::uint8_t { DecodeFailed, HashMismatch, Amplified };

struct BlockRecord {
    std::uint64_t id = 0;
    std::uint32_t n = 0;
    std::uint32_t m = 0;
    std::uint64_t leak_bits = 0;
    std::uint64_t final_bits = 0;
    BlockOutcome outcome = BlockOutcome::DecodeFailed;
    int decode_iterations = 0; // receiver only
    std::uint64_t corrected_errors = 0; // receiver only
};

/// Sequential protocol state machine shared by both roles. Incoming frames are
/// handed to receive(); the frames it returns go to the peer in order.
class Endpoint {
public:
    Endpoint(Role role, SessionSettings settings);
    virtual ~Endpoint() = default;

    Role role() const noexcept { return role_; }
    const SessionSettings& settings() const noexcept { return settings_; }

    /// Consumes one encoded frame and returns the encoded replies.
    std::vector<std::vector<std::uint8_t>> receive(std::span<const std::uint8_t> bytes);

    bool round_complete() const noexcept { return round_complete_; }
    bool finished() const noexcept { return finished_; }
    bool aborted() const noexcept { return aborted_; }
    const std::string& abort_reason() const noexcept { return abort_reason_; }

    const std::vector<TranscriptEntry>& transcript() const noexcept { return transcript_; }
    const std::vector<RoundSummary>& rounds() const noexcept { return rounds_; }
    const std::vector<BlockRecord>& blocks() const noexcept { return blocks_; }
    const Tally& cumulative_tally() const noexcept { return cumulative_; }
    const Bits& final_key() const noexcept { return final_key_; }
    std::uint64_t discarded_tail_bits() const noexcept { return discarded_tail_; }
    std::uint64_t leak_bits() const noexcept;

protected:
    virtual std::vector<Frame> on_frame(const Frame& in) = 0;

    Frame make(FrameType type, std::vector<std::uint8_t> payload);
    std::vector<std::vector<std::uint8_t>> emit(std::vector<Frame> frames);

    /// Key bits carried toward the next reconciliation block.
    std::size_t blocks_ready() const noexcept { return carry_.size() / settings_.reconciliation.block_bits; }
    Bits take_block();
    double prior_qber() const noexcept;
    std::uint32_t block_checks() const;
    std::uint64_t block_final_length(std::uint64_t leak) const;
    void finish_round();

    Role role_;
    SessionSettings settings_;
    std::uint32_t next_send_seq_ = 0;
    std::uint32_t next_recv_seq_ = 0;
    bool round_complete_ = true;
    bool finished_ = false;
    bool final_round_ = false;
    bool aborted_ = false;
    std::string abort_reason_;
    std::uint64_t round_ = 0;
    std::uint64_t next_block_id_ = 0;

    std::vector<TranscriptEntry> transcript_;
    std::vector<RoundSummary> rounds_;
    std::vector<BlockRecord> blocks_;
    Tally cumulative_;
    Bits carry_;
    Bits final_key_;
    std::uint64_t discarded_tail_ = 0;
};

/// Transmitter side: answers basis announcements and drives reconciliation.
class TransmitterEndpoint final : public Endpoint {
public:
    TransmitterEndpoint(SessionSettings settings, RandomStream rng);

    /// Installs the preparation record for the next round.
    void begin_round(PreparedLog log, bool final_round);

private:
    std::vector<Frame> on_frame(const Frame& in) override;
    std::vector<Frame> on_announce(const Frame& in);
    std::vector<Frame> on_sample_seed(const Frame& in);
    std::vector<Frame> on_sample_bits(const Frame& in);
    std::vector<Frame> on_block_status(const Frame& in);
    std::vector<Frame> start_block();

    enum class State { Idle, AwaitAnnounce, AwaitSeed, AwaitBits, AwaitStatus };
    State state_ = State::Idle;
    RandomStream rng_;
    PreparedLog log_;
    SiftedBlock block_;
    SampleSplit split_;
    std::vector<std::size_t> disclosed_;
    std::optional<KeyBlock> current_;
    std::uint32_t current_m_ = 0;
    std::size_t blocks_left_ = 0;
    Seed32 code_seed_{};
};

/// Receiver side: announces bases, draws the sample seed and decodes.
class ReceiverEndpoint final : public Endpoint {
public:
    ReceiverEndpoint(SessionSettings settings, RandomStream rng);

    /// Starts the next round; returns the encoded BASIS_ANNOUNCE.
    std::vector<std::vector<std::uint8_t>> begin_round(std::vector<Detection> detections,
                                                       bool final_round);

private:
    std::vector<Frame> on_frame(const Frame& in) override;
    std::vector<Frame> on_match_set(const Frame& in);
    std::vector<Frame> on_sample_bits(const Frame& in);
    std::vector<Frame> on_tally(const Frame& in);
    std::vector<Frame> on_syndrome(const Frame& in);
    std::vector<Frame> on_hash(const Frame& in);
    std::vector<Frame> on_pa_seed(const Frame& in);
    void after_block();

    enum class State { Idle, AwaitMatch, AwaitBits, AwaitTally, AwaitSyndrome, AwaitHash, AwaitPaSeed };
    State state_ = State::Idle;
    RandomStream rng_;
    std::vector<Detection> detections_;
    SiftedBlock block_;
    SampleSplit split_;
    std::vector<std::size_t> disclosed_;
    Tally own_counts_;
    std::optional<KeyBlock> current_;
    std::uint32_t current_m_ = 0;
    std::size_t blocks_left_ = 0;
    std::optional<DecodeResult> decoded_;
    std::uint64_t current_corrections_ = 0;
};

/// Ordered reliable byte stream carrying encoded frames.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(std::span<const std::uint8_t> bytes) = 0;
    /// Blocks until one complete frame has arrived and returns its bytes.
    virtual std::vector<std::uint8_t> receive_frame() = 0;
};

/// TCP transport. Addresses are "host:port".
std::unique_ptr<Transport> listen_transport(const std::string& address);
std::unique_ptr<Transport> connect_transport(const std::string& address, double timeout_s = 30.0);

/// Runs one round on a single endpoint over a transport until round_complete().
/// `initial` holds frames to send first (the receiver's announcement).
void drive_round(Endpoint& endpoint, Transport& transport,
                 std::vector<std::vector<std::uint8_t>> initial = {});

/// Runs one round with both endpoints in this process, exchanging encoded bytes.
void drive_round_local(TransmitterEndpoint& tx, ReceiverEndpoint& rx,
                       std::vector<std::vector<std::uint8_t>> announce);

/// Shared code seed for the session's reconciliation codes.
Seed32 session_code_seed(std::uint64_t session_id) noexcept;

/// Parity-check code for (seed, n, m), built once per process.
const LdpcCode& cached_code(const Seed32& seed, std::uint32_t n, std::uint32_t m);

} // namespace dqkd
