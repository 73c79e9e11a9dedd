#include "dqkd/postprocessing.hpp"
#include "dqkd/random.hpp"

#include <bit>
#include <fstream>

namespace dqkd {

namespace {

// Multiplication in GF(2^64) modulo x^64 + x^4 + x^3 + x + 1.
std::uint64_t gf64_mul(std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t result = 0;
    while (b != 0) {
        if (b & 1u) result ^= a;
        b >>= 1;
        const bool carry = (a >> 63) != 0;
        a <<= 1;
        if (carry) a ^= 0x1Bull;
    }
    return result;
}

std::vector<std::uint64_t> pack_words(std::span<const std::uint8_t> bits) {
    std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] & 1u) words[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    return words;
}

} // namespace

std::uint64_t poly_hash64(std::span<const std::uint8_t> bits, std::uint64_t key) noexcept {
    std::uint64_t h = 0;
    for (std::uint64_t w : pack_words(bits)) h = gf64_mul(h ^ w, key);
    return gf64_mul(h ^ static_cast<std::uint64_t>(bits.size()), key);
}

bool verify(std::span<const std::uint8_t> bits_a, std::uint64_t bits_b_hash,
            std::uint64_t key) noexcept {
    return poly_hash64(bits_a, key) == bits_b_hash;
}

Bits toeplitz_diagonal(std::span<const std::uint8_t> pa_seed, std::size_t n, std::size_t out_len) {
    if (out_len > n) throw DomainError("toeplitz: output longer than input");
    const std::size_t len = n + out_len - (out_len > 0 ? 1 : 0);
    Bits diag(len);
    RandomStream rng = RandomStream::from_bytes(pa_seed).derive("toeplitz");
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < len; ++i) {
        if (i % 64 == 0) word = rng.next_u64();
        diag[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
    }
    return diag;
}

Bits toeplitz_multiply(std::span<const std::uint8_t> diagonal, std::span<const std::uint8_t> input,
                       std::size_t out_len) {
    const std::size_t n = input.size();
    if (out_len > n) throw DomainError("toeplitz: output longer than input");
    Bits out(out_len, 0);
    if (out_len == 0) return out;
    if (diagonal.size() != n + out_len - 1) throw DomainError("toeplitz: diagonal length mismatch");

    // Row i is diag[i .. i+n-1] read backwards, so out[i] is the parity of
    // diag[i + j'] & input[n-1-j'] over j'.
    Bits reversed(input.rbegin(), input.rend());
    const auto x = pack_words(reversed);
    const auto d = pack_words(diagonal);
    const std::size_t words = x.size();
    auto diag_word = [&](std::size_t bit_offset) -> std::uint64_t {
        const std::size_t w = bit_offset / 64;
        const unsigned s = bit_offset % 64;
        std::uint64_t lo = w < d.size() ? d[w] : 0;
        if (s == 0) return lo;
        const std::uint64_t hi = w + 1 < d.size() ? d[w + 1] : 0;
        return (lo >> s) | (hi << (64 - s));
    };
    const std::uint64_t tail_mask = (n % 64 == 0) ? ~std::uint64_t{0} : ((std::uint64_t{1} << (n % 64)) - 1);
    for (std::size_t i = 0; i < out_len; ++i) {
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t v = diag_word(i + 64 * w) & x[w];
            if (w + 1 == words) v &= tail_mask;
            acc ^= v;
        }
        out[i] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
    }
    return out;
}

Bits toeplitz_extract(std::span<const std::uint8_t> pa_seed, std::span<const std::uint8_t> input,
                      std::size_t out_len) {
    if (out_len > input.size()) throw DomainError("toeplitz: output longer than input");
    return toeplitz_multiply(toeplitz_diagonal(pa_seed, input.size(), out_len), input, out_len);
}

void KeyBlock::advance(BlockStatus next, std::optional<Bits> new_bits) {
    if (status_ == BlockStatus::Discarded || static_cast<int>(next) <= static_cast<int>(status_)) {
        throw DomainError("KeyBlock: status may only move forward");
    }
    status_ = next;
    if (new_bits) bits_ = std::move(*new_bits);
}

void write_key_file(const std::filesystem::path& path, std::span<const std::uint8_t> bits) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open key file " + path.string());
    const auto len = static_cast<std::uint32_t>(bits.size());
    const char header[8] = {'Q', 'K', 'D', 'K',
                            static_cast<char>(len & 0xFF), static_cast<char>((len >> 8) & 0xFF),
                            static_cast<char>((len >> 16) & 0xFF), static_cast<char>((len >> 24) & 0xFF)};
    os.write(header, sizeof header);
    std::vector<char> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] & 1u) packed[i / 8] = static_cast<char>(packed[i / 8] | (0x80 >> (i % 8)));
    }
    os.write(packed.data(), static_cast<std::streamsize>(packed.size()));
    if (!os) throw Error("failed writing key file " + path.string());
}

Bits read_key_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open key file " + path.string());
    unsigned char header[8];
    if (!is.read(reinterpret_cast<char*>(header), sizeof header) || header[0] != 'Q' ||
        header[1] != 'K' || header[2] != 'D' || header[3] != 'K') {
        throw Error("not a QKDK key file: " + path.string());
    }
    const std::uint32_t len = header[4] | (header[5] << 8) | (header[6] << 16) |
                              (static_cast<std::uint32_t>(header[7]) << 24);
    std::vector<unsigned char> packed((len + 7) / 8);
    if (!is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()))) {
        throw Error("truncated key file: " + path.string());
    }
    Bits bits(len);
    for (std::size_t i = 0; i < len; ++i) bits[i] = (packed[i / 8] >> (7 - i % 8)) & 1u;
    return bits;
}

} // namespace dqkd
