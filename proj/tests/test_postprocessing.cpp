#include "dqkd/postprocessing.hpp"
#include "dqkd/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace dqkd;

namespace {

Bits random_bits(RandomStream& rng, std::size_t n, double p = 0.5) {
    Bits b(n);
    for (auto& x : b) x = rng.bernoulli(p) ? 1 : 0;
    return b;
}

Bits xor_bits(const Bits& a, const Bits& b) {
    Bits out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] ^ b[i];
    return out;
}

// out[i] = XOR_j T[i][j] in[j] with T[i][j] = diag[i - j + n - 1].
Bits naive_toeplitz(const Bits& diag, const Bits& in, std::size_t out_len) {
    const std::size_t n = in.size();
    Bits out(out_len, 0);
    for (std::size_t i = 0; i < out_len; ++i) {
        unsigned acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc ^= diag[i + n - 1 - j] & in[j];
        out[i] = static_cast<std::uint8_t>(acc);
    }
    return out;
}

Seed32 seed(std::uint64_t v) { return seed_from_u64(v); }

} // namespace

TEST_CASE("small code structure") {
    const auto code = build_code(seed(1), 16, 8);
    CHECK(code.n() == 16);
    CHECK(code.m() == 8);
    std::vector<int> row_weight(8, 0);
    for (std::uint32_t c = 0; c < 16; ++c) {
        const auto col = code.column(c);
        CHECK(col.size() == 3);
        std::set<std::uint32_t> rows(col.begin(), col.end());
        CHECK(rows.size() == col.size());
        for (auto r : col) ++row_weight[r];
    }
    for (std::uint32_t r = 0; r < 8; ++r) {
        CHECK(row_weight[r] == static_cast<int>(code.check(r).size()));
        CHECK(row_weight[r] >= 5);
        CHECK(row_weight[r] <= 7);
    }
}

TEST_CASE("production-size structure") {
    for (std::uint32_t m : {751u, 1024u, 1400u}) {
        const auto code = build_code(seed(9), 4096, m);
        CHECK(code.edges() == 3u * 4096u);
        std::uint32_t lo = 4096, hi = 0;
        for (std::uint32_t r = 0; r < m; ++r) {
            lo = std::min<std::uint32_t>(lo, code.check(r).size());
            hi = std::max<std::uint32_t>(hi, code.check(r).size());
        }
        CHECK(hi - lo <= 1);
        CHECK(code.count_four_cycles() == 0);
    }
    CHECK_THROWS_AS(build_code(seed(1), 16, 16), DomainError);
    CHECK_THROWS_AS(build_code(seed(1), 16, 0), DomainError);
}

TEST_CASE("code determinism and seed sensitivity") {
    CHECK(build_code(seed(3), 512, 128) == build_code(seed(3), 512, 128));
    for (std::uint64_t s = 0; s < 100; ++s) {
        CHECK_FALSE(build_code(seed(1000 + 2 * s), 256, 64) == build_code(seed(1001 + 2 * s), 256, 64));
    }
}

TEST_CASE("syndrome linearity") {
    const auto code = build_code(seed(4), 1024, 256);
    RandomStream rng(4);
    CHECK(syndrome(code, Bits(1024, 0)) == Bits(256, 0));
    for (int t = 0; t < 20; ++t) {
        const auto a = random_bits(rng, 1024), b = random_bits(rng, 1024);
        CHECK(syndrome(code, xor_bits(a, b)) == xor_bits(syndrome(code, a), syndrome(code, b)));
    }
    for (std::uint32_t i = 0; i < 1024; i += 37) {
        Bits e(1024, 0);
        e[i] = 1;
        Bits col(256, 0);
        for (auto r : code.column(i)) col[r] = 1;
        CHECK(syndrome(code, e) == col);
    }
    CHECK_THROWS_AS(syndrome(code, Bits(1023, 0)), DomainError);
}

TEST_CASE("decoder") {
    const auto code = build_code(seed(5), 4096, 1200);
    RandomStream rng(5);
    const auto key = random_bits(rng, 4096);
    const auto target = syndrome(code, key);

    const auto clean = decode(code, key, target, 0.023);
    REQUIRE(clean);
    CHECK(clean->iterations == 0);
    CHECK(clean->bits == key);
    CHECK_THROWS_AS(decode(code, key, target, 0.0), DomainError);
    CHECK_THROWS_AS(decode(code, key, target, 0.5), DomainError);

    int failures = 0;
    for (int t = 0; t < 40; ++t) {
        const auto a = random_bits(rng, 4096);
        const auto noisy = xor_bits(a, random_bits(rng, 4096, 0.023));
        const auto r = decode(code, noisy, syndrome(code, a), 0.023);
        if (!r) {
            ++failures;
            continue;
        }
        CHECK(syndrome(code, r->bits) == syndrome(code, a));
        CHECK(r->bits == a);
    }
    CHECK(failures <= 2);

    for (int t = 0; t < 10; ++t) {
        const auto a = random_bits(rng, 4096);
        const auto noisy = xor_bits(a, random_bits(rng, 4096, 0.25));
        const auto r = decode(code, noisy, syndrome(code, a), 0.25);
        if (r) CHECK(syndrome(code, r->bits) == syndrome(code, a));
    }
}

TEST_CASE("check budget") {
    CHECK(check_budget(1.16, 0.023, 4096) == 751);
    CHECK(check_budget(1.16, 0.0, 4096) == 1);
    CHECK(check_budget(1.16, 0.5, 4096) == 4095);
}

TEST_CASE("verification hash") {
    RandomStream rng(6);
    const std::uint64_t key = rng.next_u64() | 1;
    CHECK(verify({}, poly_hash64({}, key), key));
    int collisions = 0;
    for (int t = 0; t < 10'000; ++t) {
        auto a = random_bits(rng, 1 + rng.uniform_int(4096));
        const std::uint64_t k = rng.next_u64() | 1;
        CHECK(verify(a, poly_hash64(a, k), k));
        auto b = a;
        b[rng.uniform_int(b.size())] ^= 1;
        collisions += verify(b, poly_hash64(a, k), k) ? 1 : 0;
    }
    CHECK(collisions == 0);
    CHECK(poly_hash64(Bits{0}, 7) != poly_hash64(Bits{0, 0}, 7));
}

TEST_CASE("Toeplitz hand example") {
    const Bits diag = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1};
    const Bits in = {1, 1, 0, 1, 0, 0, 1, 0};
    CHECK(toeplitz_multiply(diag, in, 4) == Bits{1, 0, 0, 0});
}

TEST_CASE("Toeplitz agrees with the naive product") {
    RandomStream rng(7);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.uniform_int(64);
        const std::size_t l = 1 + rng.uniform_int(n);
        const auto s = seed(rng.next_u64());
        const auto in = random_bits(rng, n);
        const auto diag = toeplitz_diagonal(s, n, l);
        REQUIRE(diag.size() == n + l - 1);
        CHECK(toeplitz_extract(s, in, l) == naive_toeplitz(diag, in, l));
    }
    for (std::size_t n : {100u, 1000u, 4096u}) {
        const auto s = seed(n);
        const auto in = random_bits(rng, n);
        const auto diag = toeplitz_diagonal(s, n, n / 3);
        CHECK(toeplitz_extract(s, in, n / 3) == naive_toeplitz(diag, in, n / 3));
    }
}

TEST_CASE("Toeplitz linearity and contract") {
    RandomStream rng(8);
    const auto s = seed(8);
    CHECK(toeplitz_extract(s, Bits(500, 0), 200) == Bits(200, 0));
    for (int t = 0; t < 50; ++t) {
        const auto a = random_bits(rng, 500), b = random_bits(rng, 500);
        CHECK(toeplitz_extract(s, xor_bits(a, b), 200) ==
              xor_bits(toeplitz_extract(s, a, 200), toeplitz_extract(s, b, 200)));
    }
    CHECK_THROWS_AS(toeplitz_extract(s, Bits(10, 0), 11), DomainError);
    CHECK(toeplitz_extract(s, Bits(10, 1), 0).empty());
}

TEST_CASE("key block lifecycle") {
    KeyBlock b(3, Bits{1, 0, 1});
    CHECK(b.status() == BlockStatus::Raw);
    b.account_leak(100);
    b.account_leak(64);
    CHECK(b.leak_bits() == 164);
    b.advance(BlockStatus::Corrected, Bits{1, 1, 1});
    CHECK(b.bits() == Bits{1, 1, 1});
    b.advance(BlockStatus::Verified);
    CHECK_THROWS_AS(b.advance(BlockStatus::Corrected), DomainError);
    CHECK_THROWS_AS(b.advance(BlockStatus::Verified), DomainError);
    b.advance(BlockStatus::Amplified, Bits{0});
    CHECK(b.status() == BlockStatus::Amplified);

    KeyBlock d(4, Bits{});
    d.advance(BlockStatus::Discarded);
    CHECK_THROWS_AS(d.advance(BlockStatus::Amplified), DomainError);
}

TEST_CASE("key file format") {
    const auto dir = std::filesystem::temp_directory_path() / "dqkd_keyfile_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "k.qkdk";
    const Bits bits = {1, 0, 1, 1, 0, 0, 0, 1, 1, 1};
    write_key_file(path, bits);
    std::ifstream in(path, std::ios::binary);
    const std::string raw((std::istreambuf_iterator<char>(in)), {});
    REQUIRE(raw.size() == 8 + 2);
    CHECK(raw.substr(0, 4) == "QKDK");
    CHECK(raw[4] == 10);
    CHECK(raw[5] == 0);
    CHECK(static_cast<unsigned char>(raw[8]) == 0xB1);
    CHECK(static_cast<unsigned char>(raw[9]) == 0xC0);
    CHECK(read_key_file(path) == bits);

    write_key_file(path, Bits{});
    CHECK(read_key_file(path).empty());
    std::ofstream(path, std::ios::binary) << "QKDX\0\0\0\0";
    CHECK_THROWS(read_key_file(path));
    std::filesystem::remove_all(dir);
}
