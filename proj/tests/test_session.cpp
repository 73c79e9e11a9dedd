#include "dqkd/session.hpp"

#include <doctest.h>

#include <cmath>
#include <thread>

using namespace dqkd;

namespace {

struct RoundData {
    PreparedLog log;
    std::vector<Detection> detections;
};

// Detections over a lossy channel with intrinsic flips and random noise clicks.
RoundData make_round(std::uint64_t first_gate, std::uint64_t n, double eta, double flip,
                     std::uint64_t seed) {
    RandomStream rng(seed);
    ProtocolParams params;
    RoundData d;
    std::vector<PreparedGate> gates;
    for (std::uint64_t g = first_gate; g < first_gate + n; ++g) {
        PulseRecord p;
        const double u = rng.uniform();
        p.intensity = u < 0.5 ? IntensityClass::Signal : u < 0.75 ? IntensityClass::Decoy : IntensityClass::Vacuum;
        if (p.intensity != IntensityClass::Vacuum) {
            p.basis = static_cast<Basis>(rng.next_u32() & 1u);
            p.bit = static_cast<BitValue>(rng.next_u32() & 1u);
        }
        gates.push_back(PreparedGate::from(p));
        const auto rx_basis = static_cast<Basis>(rng.next_u32() & 1u);
        if (rng.bernoulli(1 - std::exp(-eta * params.mu_of(p.intensity)))) {
            BitValue bit = static_cast<BitValue>(rng.next_u32() & 1u);
            if (p.basis && *p.basis == rx_basis) bit = static_cast<BitValue>(*p.bit ^ (rng.bernoulli(flip) ? 1 : 0));
            d.detections.push_back({g, rx_basis, bit});
        } else if (rng.bernoulli(1e-4)) {
            d.detections.push_back({g, rx_basis, static_cast<BitValue>(rng.next_u32() & 1u)});
        }
    }
    d.log = PreparedLog(first_gate, std::move(gates));
    return d;
}

SessionSettings settings() {
    SessionSettings s;
    s.session_id = 0xC0FFEE;
    return s;
}

struct Pair {
    TransmitterEndpoint tx{settings(), RandomStream(1).derive("post")};
    ReceiverEndpoint rx{settings(), RandomStream(4).derive("post")};
};

std::vector<RoundData> rounds() {
    return {make_round(0, 150'000, 0.5, 0.02, 10), make_round(150'000, 150'000, 0.5, 0.02, 11)};
}

void run_local(Pair& p, const std::vector<RoundData>& data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool last = i + 1 == data.size();
        p.tx.begin_round(data[i].log, last);
        drive_round_local(p.tx, p.rx, p.rx.begin_round(data[i].detections, last));
    }
}

} // namespace

TEST_CASE("two rounds reconcile to identical keys") {
    Pair p;
    run_local(p, rounds());
    CHECK(p.tx.finished());
    CHECK(p.rx.finished());
    CHECK(p.tx.rounds().size() == 2);
    REQUIRE(p.tx.blocks().size() >= 3);
    CHECK_FALSE(p.tx.final_key().empty());
    CHECK(p.tx.final_key() == p.rx.final_key());

    std::uint64_t leak = 0, final_bits = 0;
    for (const auto& b : p.tx.blocks()) {
        CHECK(b.leak_bits == b.m + kVerifyHashBits);
        leak += b.leak_bits;
        final_bits += b.final_bits;
    }
    CHECK(p.tx.leak_bits() == leak);
    CHECK(p.rx.leak_bits() == leak);
    CHECK(final_bits == p.tx.final_key().size());
    CHECK(p.tx.cumulative_tally() == p.rx.cumulative_tally());
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(p.tx.rounds()[i].tally == p.rx.rounds()[i].tally);
        CHECK(p.tx.rounds()[i].sampled_qber() == doctest::Approx(0.02).epsilon(0.3));
    }
    CHECK(p.tx.discarded_tail_bits() < 4096);
}

TEST_CASE("transcripts are deterministic and mirror each other") {
    const auto data = rounds();
    Pair a, b;
    run_local(a, data);
    run_local(b, data);
    REQUIRE(a.tx.transcript().size() == b.tx.transcript().size());
    for (std::size_t i = 0; i < a.tx.transcript().size(); ++i) {
        CHECK(a.tx.transcript()[i].bytes == b.tx.transcript()[i].bytes);
    }
    REQUIRE(a.tx.transcript().size() == a.rx.transcript().size());
    for (std::size_t i = 0; i < a.tx.transcript().size(); ++i) {
        CHECK(a.tx.transcript()[i].bytes == a.rx.transcript()[i].bytes);
        CHECK(a.tx.transcript()[i].outgoing != a.rx.transcript()[i].outgoing);
    }
}

TEST_CASE("unknown gate in the report aborts both sides") {
    auto data = make_round(0, 20'000, 0.5, 0.02, 12);
    data.detections.push_back({25'000, Basis::Rectilinear, 0});
    Pair p;
    p.tx.begin_round(data.log, true);
    CHECK_THROWS_AS(drive_round_local(p.tx, p.rx, p.rx.begin_round(data.detections, true)), ProtocolError);
    CHECK(p.tx.aborted());
    CHECK(p.rx.aborted());
    CHECK(p.rx.abort_reason().find("never sent") != std::string::npos);
    CHECK(p.tx.final_key().empty());
}

TEST_CASE("duplicate gate aborts") {
    auto data = make_round(0, 20'000, 0.5, 0.02, 13);
    data.detections.push_back(data.detections.front());
    Pair p;
    p.tx.begin_round(data.log, true);
    CHECK_THROWS_AS(drive_round_local(p.tx, p.rx, p.rx.begin_round(data.detections, true)), ProtocolError);
    CHECK(p.tx.aborted());
}

TEST_CASE("corrupt, foreign and out-of-order frames abort") {
    const auto data = make_round(0, 20'000, 0.5, 0.02, 14);
    {
        Pair p;
        p.tx.begin_round(data.log, true);
        auto announce = p.rx.begin_round(data.detections, true);
        announce[0][20] ^= 0x40;
        const auto replies = p.tx.receive(announce[0]);
        CHECK(p.tx.aborted());
        REQUIRE(replies.size() == 1);
        CHECK(decode_frame(replies[0]).type == FrameType::Abort);
        p.rx.receive(replies[0]);
        CHECK(p.rx.aborted());
        CHECK_THROWS_AS(p.tx.receive(announce[0]), ProtocolError);
    }
    {
        Pair p;
        p.tx.begin_round(data.log, true);
        auto announce = p.rx.begin_round(data.detections, true);
        Frame f = decode_frame(announce[0]);
        f.session_id ^= 1;
        p.tx.receive(encode_frame(f));
        CHECK(p.tx.aborted());
        CHECK(p.tx.abort_reason().find("session id") != std::string::npos);
    }
    {
        Pair p;
        p.tx.begin_round(data.log, true);
        auto announce = p.rx.begin_round(data.detections, true);
        Frame f = decode_frame(announce[0]);
        f.sequence = 5;
        p.tx.receive(encode_frame(f));
        CHECK(p.tx.aborted());
    }
    {
        Pair p;
        p.tx.begin_round(data.log, true);
        const Frame f{FrameType::EcHash, settings().session_id, 0, {}};
        p.tx.receive(encode_frame(f));
        CHECK(p.tx.aborted());
    }
}

TEST_CASE("socket transport matches the in-process exchange") {
    const auto data = rounds();
    Pair local;
    run_local(local, data);

    Pair remote;
    const std::string address = "127.0.0.1:47311";
    std::exception_ptr tx_error;
    std::thread tx_thread([&] {
        try {
            auto link = listen_transport(address);
            for (std::size_t i = 0; i < data.size(); ++i) {
                remote.tx.begin_round(data[i].log, i + 1 == data.size());
                drive_round(remote.tx, *link);
            }
        } catch (...) {
            tx_error = std::current_exception();
        }
    });
    auto link = connect_transport(address, 10.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool last = i + 1 == data.size();
        drive_round(remote.rx, *link, remote.rx.begin_round(data[i].detections, last));
    }
    tx_thread.join();
    REQUIRE_FALSE(tx_error);

    CHECK(remote.tx.final_key() == local.tx.final_key());
    CHECK(remote.rx.final_key() == local.rx.final_key());
    REQUIRE(remote.tx.transcript().size() == local.tx.transcript().size());
    for (std::size_t i = 0; i < local.tx.transcript().size(); ++i) {
        CHECK(remote.tx.transcript()[i].bytes == local.tx.transcript()[i].bytes);
        CHECK(remote.tx.transcript()[i].outgoing == local.tx.transcript()[i].outgoing);
    }
}

TEST_CASE("round sequencing contract") {
    const auto data = make_round(0, 1000, 0.5, 0.02, 15);
    Pair p;
    p.tx.begin_round(data.log, false);
    p.rx.begin_round(data.detections, false);
    CHECK_THROWS_AS(p.rx.begin_round(data.detections, false), ProtocolError);
    CHECK_THROWS_AS(p.tx.begin_round(data.log, false), ProtocolError);
}

TEST_CASE("reconciliation config validation") {
    ReconciliationConfig c;
    CHECK_NOTHROW(validate_reconciliation(c));
    c.block_bits = 32;
    CHECK_THROWS_AS(validate_reconciliation(c), ValidationError);
    c = {};
    c.ldpc_efficiency = 0.9;
    CHECK_THROWS_AS(validate_reconciliation(c), ValidationError);
}
