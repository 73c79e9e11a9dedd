#pragma once

#include "dqkd/core.hpp"
#include "dqkd/decoy.hpp"
#include "dqkd/postprocessing.hpp"
#include "dqkd/transmitter.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dqkd {

struct ProtocolError : Error {
    using Error::Error;
};

struct FrameError : Error {
    enum class Kind { Corrupt, Incomplete, UnknownType, Oversize };
    FrameError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
    Kind kind;
};

enum class FrameType : std::uint8_t {
    BasisAnnounce = 0x01,
    MatchSet = 0x02,
    SampleSeed = 0x03,
    SampleBits = 0x04,
    TallyReport = 0x05,
    EcSyndrome = 0x06,
    EcHash = 0x07,
    PaSeed = 0x08,
    Abort = 0x09,
};

std::string_view to_string(FrameType t) noexcept;
bool is_known_frame_type(std::uint8_t tag) noexcept;

struct Frame {
    FrameType type = FrameType::Abort;
    std::uint64_t session_id = 0;
    std::uint32_t sequence = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

constexpr std::size_t kFrameHeaderBytes = 4 + 1 + 8 + 4;
constexpr std::size_t kFrameTrailerBytes = 4;
constexpr std::size_t kMaxPayloadBytes = std::size_t{1} << 24;

std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Decodes one frame from the front of `bytes`; `consumed` receives its size.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

/// Little-endian payload builder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void varint(std::uint64_t v);
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    /// Bit list packed LSB first, preceded by its length as a varint.
    void bits(std::span<const std::uint8_t> b);
    /// Zigzag-varint deltas, preceded by the count.
    void delta_list(std::span<const std::uint64_t> values);

    std::vector<std::uint8_t> take() { return std::move(buf_); }
    const std::vector<std::uint8_t>& data() const noexcept { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

/// Reader counterpart; throws ProtocolError on malformed payloads.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::uint64_t varint();
    std::vector<std::uint8_t> bytes(std::size_t n);
    Bits bits();
    std::vector<std::uint64_t> delta_list();

    bool done() const noexcept { return pos_ == data_.size(); }
    void expect_done() const;

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Receiver's view of one gate after squashing: the measured basis and bit.
struct Detection {
    std::uint64_t gate = 0;
    Basis basis = Basis::Rectilinear;
    BitValue bit = 0;

    bool operator==(const Detection&) const = default;
};

/// Transmitter's private record of a contiguous run of gates.
class PreparedLog {
public:
    PreparedLog() = default;
    PreparedLog(std::uint64_t first_gate, std::vector<PreparedGate> gates)
        : first_gate_(first_gate), gates_(std::move(gates)) {}

    std::uint64_t first_gate() const noexcept { return first_gate_; }
    std::uint64_t end_gate() const noexcept { return first_gate_ + gates_.size(); }
    std::size_t size() const noexcept { return gates_.size(); }
    std::optional<PreparedGate> find(std::uint64_t gate) const noexcept;
    void push_back(PreparedGate g) { gates_.push_back(g); }

    /// Pulses sent per intensity class.
    std::array<std::uint64_t, 3> sent_counts() const noexcept;

private:
    std::uint64_t first_gate_ = 0;
    std::vector<PreparedGate> gates_;
};

enum class Partition : std::uint8_t { None = 0, Sample = 1, Key = 2 };

/// Basis-matched gates with both parties' bits.
struct SiftedBlock {
    std::vector<std::uint64_t> gates;
    std::vector<IntensityClass> intensity;
    std::vector<Basis> basis;
    Bits alice_bits; // 0 for vacuum positions
    Bits bob_bits;
    std::vector<Partition> partition; // Sample/Key for signal positions only

    /// Gates with at least one click, per intensity class, regardless of basis.
    std::array<std::uint64_t, 3> detected{};
    std::uint64_t reported = 0;

    std::size_t size() const noexcept { return gates.size(); }
};

/// Keeps the reported gates whose basis matches the preparation. Vacuum gates
/// are kept apart for the background yield; their bits are never key.
/// Throws ProtocolError on a duplicate gate or a gate that was never sent.
SiftedBlock sift(std::span<const Detection> report, const PreparedLog& record);

struct SampleSplit {
    std::vector<std::size_t> sample; // positions into the block, ascending
    std::vector<std::size_t> key;
};

/// floor(fraction * n_signal) signal positions chosen uniformly from the seed.
SampleSplit sample_split(std::span<const IntensityClass> intensity, double fraction,
                         std::span<const std::uint8_t> shared_seed);
SampleSplit sample_split(SiftedBlock& block, double fraction,
                         std::span<const std::uint8_t> shared_seed);

/// Per-class counts: signal errors over the sample, decoy errors over every
/// matched decoy gate, vacuum with no comparisons.
Tally tally(const SiftedBlock& block, const SampleSplit& split,
            const std::array<std::uint64_t, 3>& sent);

} // namespace dqkd
