#include "dqkd/protocol.hpp"
#include "dqkd/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <zlib.h>

namespace dqkd {

std::string_view to_string(FrameType t) noexcept {
    switch (t) {
    case FrameType::BasisAnnounce: return "BASIS_ANNOUNCE";
    case FrameType::MatchSet: return "MATCH_SET";
    case FrameType::SampleSeed: return "SAMPLE_SEED";
    case FrameType::SampleBits: return "SAMPLE_BITS";
    case FrameType::TallyReport: return "TALLY_REPORT";
    case FrameType::EcSyndrome: return "EC_SYNDROME";
    case FrameType::EcHash: return "EC_HASH";
    case FrameType::PaSeed: return "PA_SEED";
    case FrameType::Abort: return "ABORT";
    }
    return "UNKNOWN";
}

bool is_known_frame_type(std::uint8_t tag) noexcept { return tag >= 0x01 && tag <= 0x09; }

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t pos, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > kMaxPayloadBytes) {
        throw FrameError(FrameError::Kind::Oversize, "frame payload exceeds 2^24 bytes");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + frame.payload.size() + kFrameTrailerBytes);
    put_le(out, frame.payload.size(), 4);
    out.push_back(static_cast<std::uint8_t>(frame.type));
    put_le(out, frame.session_id, 8);
    put_le(out, frame.sequence, 4);
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    put_le(out, crc32_of(out), 4);
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    if (bytes.size() < kFrameHeaderBytes + kFrameTrailerBytes) {
        throw FrameError(FrameError::Kind::Incomplete, "incomplete frame header");
    }
    const std::uint64_t len = get_le(bytes, 0, 4);
    if (len > kMaxPayloadBytes) {
        throw FrameError(FrameError::Kind::Oversize, "frame payload length exceeds 2^24 bytes");
    }
    const std::size_t total = kFrameHeaderBytes + len + kFrameTrailerBytes;
    if (bytes.size() < total) throw FrameError(FrameError::Kind::Incomplete, "incomplete frame body");
    const auto expected = static_cast<std::uint32_t>(get_le(bytes, total - 4, 4));
    if (crc32_of(bytes.first(total - 4)) != expected) {
        throw FrameError(FrameError::Kind::Corrupt, "frame CRC mismatch");
    }
    const std::uint8_t tag = bytes[4];
    if (!is_known_frame_type(tag)) {
        throw FrameError(FrameError::Kind::UnknownType, "unknown frame type " + std::to_string(tag));
    }
    Frame f;
    f.type = static_cast<FrameType>(tag);
    f.session_id = get_le(bytes, 5, 8);
    f.sequence = static_cast<std::uint32_t>(get_le(bytes, 13, 4));
    f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.begin() + kFrameHeaderBytes + len);
    if (consumed) *consumed = total;
    return f;
}

void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v, 4); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v, 8); }

void ByteWriter::varint(std::uint64_t v) {
    while (v >= 0x80) {
        buf_.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    buf_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::bits(std::span<const std::uint8_t> b) {
    varint(b.size());
    std::uint8_t acc = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        acc |= static_cast<std::uint8_t>((b[i] & 1u) << (i % 8));
        if (i % 8 == 7) {
            buf_.push_back(acc);
            acc = 0;
        }
    }
    if (b.size() % 8 != 0) buf_.push_back(acc);
}

void ByteWriter::delta_list(std::span<const std::uint64_t> values) {
    varint(values.size());
    std::uint64_t prev = 0;
    for (auto v : values) {
        const auto d = static_cast<std::int64_t>(v - prev);
        varint((static_cast<std::uint64_t>(d) << 1) ^ static_cast<std::uint64_t>(d >> 63));
        prev = v;
    }
}

void ByteReader::need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ProtocolError("malformed payload: truncated field");
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    const auto v = static_cast<std::uint32_t>(get_le(data_, pos_, 4));
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    const auto v = get_le(data_, pos_, 8);
    pos_ += 8;
    return v;
}

std::uint64_t ByteReader::varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        const std::uint8_t b = u8();
        v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
        if (!(b & 0x80)) return v;
    }
    throw ProtocolError("malformed payload: varint too long");
}

std::vector<std::uint8_t> ByteReader::bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return out;
}

Bits ByteReader::bits() {
    const std::uint64_t n = varint();
    if (n > 8 * (data_.size() - pos_)) throw ProtocolError("malformed payload: bit list too long");
    Bits out(n);
    const auto packed = bytes((n + 7) / 8);
    for (std::size_t i = 0; i < n; ++i) out[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return out;
}

std::vector<std::uint64_t> ByteReader::delta_list() {
    const std::uint64_t n = varint();
    if (n > data_.size() - pos_) throw ProtocolError("malformed payload: list too long");
    std::vector<std::uint64_t> out;
    out.reserve(n);
    std::uint64_t prev = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t z = varint();
        const auto d = static_cast<std::int64_t>((z >> 1) ^ (~(z & 1) + 1));
        prev += static_cast<std::uint64_t>(d);
        out.push_back(prev);
    }
    return out;
}

void ByteReader::expect_done() const {
    if (!done()) throw ProtocolError("malformed payload: trailing bytes");
}

std::optional<PreparedGate> PreparedLog::find(std::uint64_t gate) const noexcept {
    if (gate < first_gate_ || gate >= end_gate()) return std::nullopt;
    return gates_[gate - first_gate_];
}

std::array<std::uint64_t, 3> PreparedLog::sent_counts() const noexcept {
    std::array<std::uint64_t, 3> sent{};
    for (auto g : gates_) ++sent[static_cast<std::size_t>(g.intensity())];
    return sent;
}

SiftedBlock sift(std::span<const Detection> report, const PreparedLog& record) {
    std::vector<std::uint64_t> seen;
    seen.reserve(report.size());
    for (const auto& d : report) seen.push_back(d.gate);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
        throw ProtocolError("duplicate gate index in receiver report");
    }

    SiftedBlock block;
    block.reported = report.size();
    for (const auto& d : report) {
        const auto prep = record.find(d.gate);
        if (!prep) {
            throw ProtocolError("receiver reported gate " + std::to_string(d.gate) +
                                " that was never sent");
        }
        const auto cls = prep->intensity();
        ++block.detected[static_cast<std::size_t>(cls)];
        const bool vacuum = cls == IntensityClass::Vacuum;
        if (!vacuum && prep->basis() != d.basis) continue;
        block.gates.push_back(d.gate);
        block.intensity.push_back(cls);
        block.basis.push_back(d.basis);
        block.alice_bits.push_back(vacuum ? 0 : prep->bit());
        block.bob_bits.push_back(d.bit);
        block.partition.push_back(Partition::None);
    }
    return block;
}

SampleSplit sample_split(std::span<const IntensityClass> intensity, double fraction,
                         std::span<const std::uint8_t> shared_seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("sample fraction must lie in (0,1)");
    std::vector<std::size_t> signal;
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        if (intensity[i] == IntensityClass::Signal) signal.push_back(i);
    }
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(signal.size())));

    // Partial Fisher-Yates: the first k slots become the sample.
    RandomStream rng = RandomStream::from_bytes(shared_seed).derive("sample");
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(signal.size() - i);
        std::swap(signal[i], signal[j]);
    }
    SampleSplit split;
    split.sample.assign(signal.begin(), signal.begin() + static_cast<std::ptrdiff_t>(k));
    split.key.assign(signal.begin() + static_cast<std::ptrdiff_t>(k), signal.end());
    std::sort(split.sample.begin(), split.sample.end());
    std::sort(split.key.begin(), split.key.end());
    return split;
}

SampleSplit sample_split(SiftedBlock& block, double fraction,
                         std::span<const std::uint8_t> shared_seed) {
    SampleSplit split = sample_split(block.intensity, fraction, shared_seed);
    for (auto i : split.sample) block.partition[i] = Partition::Sample;
    for (auto i : split.key) block.partition[i] = Partition::Key;
    return split;
}

Tally tally(const SiftedBlock& block, const SampleSplit& split,
            const std::array<std::uint64_t, 3>& sent) {
    for (std::size_t c = 0; c < 3; ++c) {
        if (sent[c] == 0) {
            throw DomainError("tally: no " + std::string(to_string(static_cast<IntensityClass>(c))) +
                              " pulses were sent");
        }
    }
    Tally t;
    for (std::size_t c = 0; c < 3; ++c) {
        t.by_class[c].sent = sent[c];
        t.by_class[c].detected = block.detected[c];
    }
    auto& sig = t[IntensityClass::Signal];
    for (auto i : split.sample) {
        ++sig.compared;
        sig.errors += block.alice_bits[i] != block.bob_bits[i] ? 1 : 0;
    }
    auto& dec = t[IntensityClass::Decoy];
    for (std::size_t i = 0; i < block.size(); ++i) {
        if (block.intensity[i] != IntensityClass::Decoy) continue;
        ++dec.compared;
        dec.errors += block.alice_bits[i] != block.bob_bits[i] ? 1 : 0;
    }
    return t;
}

} // namespace dqkd
