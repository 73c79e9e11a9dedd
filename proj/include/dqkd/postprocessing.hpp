#pragma once

#include "dqkd/core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace dqkd {

/// One bit per element, values 0/1.
using Bits = std::vector<std::uint8_t>;
using Seed32 = std::array<std::uint8_t, 32>;

Seed32 seed_from_u64(std::uint64_t value) noexcept;

/// Sparse binary parity-check matrix with constant column weight.
class LdpcCode {
public:
    std::uint32_t n() const noexcept { return n_; }
    std::uint32_t m() const noexcept { return m_; }
    std::uint32_t column_weight() const noexcept { return column_weight_; }
    std::size_t edges() const noexcept { return check_vars_.size(); }

    std::span<const std::uint32_t> check(std::uint32_t row) const noexcept {
        return {check_vars_.data() + check_start_[row], check_start_[row + 1] - check_start_[row]};
    }
    /// Index of the first edge of `row` in check-major edge order.
    std::uint32_t check_offset(std::uint32_t row) const noexcept { return check_start_[row]; }
    std::span<const std::uint32_t> column(std::uint32_t col) const noexcept {
        return {var_checks_.data() + var_start_[col], var_start_[col + 1] - var_start_[col]};
    }
    /// For each edge in check order, its position in var-major order.
    std::span<const std::uint32_t> edge_to_var_slot() const noexcept { return edge_var_slot_; }

    std::size_t count_four_cycles() const;

    bool operator==(const LdpcCode& o) const noexcept {
        return n_ == o.n_ && m_ == o.m_ && check_start_ == o.check_start_ &&
               check_vars_ == o.check_vars_;
    }

    friend LdpcCode build_code(std::span<const std::uint8_t> seed, std::uint32_t n, std::uint32_t m);

private:
    std::uint32_t n_ = 0, m_ = 0, column_weight_ = 0;
    std::vector<std::uint32_t> check_start_, check_vars_;
    std::vector<std::uint32_t> var_start_, var_checks_;
    std::vector<std::uint32_t> edge_var_slot_;
};

constexpr std::uint32_t kColumnWeight = 3;

/// Column weight 3, row weights within one of each other. Edges are placed
/// progressively toward the row farthest from the column in the Tanner graph,
/// then remaining 4-cycles are broken by degree-preserving edge swaps.
LdpcCode build_code(std::span<const std::uint8_t> seed, std::uint32_t n, std::uint32_t m);

Bits syndrome(const LdpcCode& code, std::span<const std::uint8_t> bits);

constexpr int kMaxDecodeIterations = 60;

struct DecodeResult {
    Bits bits;
    int iterations = 0;
};

/// Layered sum-product decoding toward the target syndrome. Returns nothing
/// when the syndrome is not matched within max_iterations.
std::optional<DecodeResult> decode(const LdpcCode& code, std::span<const std::uint8_t> noisy_bits,
                                   std::span<const std::uint8_t> target_syndrome, double qber_prior,
                                   int max_iterations = kMaxDecodeIterations);

/// ceil(f * H2(qber) * n), kept inside [1, n-1].
std::uint32_t check_budget(double f, double qber, std::uint32_t n);

/// Polynomial hash over GF(2^64) keyed by a nonzero 64-bit point.
std::uint64_t poly_hash64(std::span<const std::uint8_t> bits, std::uint64_t key) noexcept;

constexpr std::uint64_t kVerifyHashBits = 64;

bool verify(std::span<const std::uint8_t> bits_a, std::uint64_t bits_b_hash,
            std::uint64_t key) noexcept;

/// Diagonal sequence (n + len - 1 bits) of the Toeplitz matrix for a seed.
Bits toeplitz_diagonal(std::span<const std::uint8_t> pa_seed, std::size_t n, std::size_t out_len);

/// out[i] = XOR_j diag[i - j + n - 1] & in[j], computed word-parallel.
Bits toeplitz_multiply(std::span<const std::uint8_t> diagonal, std::span<const std::uint8_t> input,
                       std::size_t out_len);

Bits toeplitz_extract(std::span<const std::uint8_t> pa_seed, std::span<const std::uint8_t> input,
                      std::size_t out_len);

enum class BlockStatus : std::uint8_t { Raw, Corrected, Verified, Amplified, Discarded };

/// A block of sifted key bits for one party and its disclosure ledger.
class KeyBlock {
public:
    KeyBlock(std::uint64_t id, Bits bits) : id_(id), bits_(std::move(bits)) {}

    std::uint64_t id() const noexcept { return id_; }
    const Bits& bits() const noexcept { return bits_; }
    BlockStatus status() const noexcept { return status_; }
    std::uint64_t leak_bits() const noexcept { return leak_; }

    void account_leak(std::uint64_t bits) noexcept { leak_ += bits; }
    /// Moves the block forward; going backwards throws.
    void advance(BlockStatus next, std::optional<Bits> new_bits = std::nullopt);

private:
    std::uint64_t id_;
    Bits bits_;
    BlockStatus status_ = BlockStatus::Raw;
    std::uint64_t leak_ = 0;
};

/// Key file: "QKDK", u32 little-endian length in bits, then bits packed MSB first.
void write_key_file(const std::filesystem::path& path, std::span<const std::uint8_t> bits);
Bits read_key_file(const std::filesystem::path& path);

} // namespace dqkd
