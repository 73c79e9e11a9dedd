#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace dqkd {

/// Philox4x32-10 block function (Salmon et al., counter-based).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seedable, splittable random stream built on Philox4x32-10.
///
/// A stream is identified by a 64-bit key; its output is the Philox image of
/// an incrementing 128-bit counter. Child streams get keys derived from the
/// parent key and a label, so independent consumers (transmitter, channel,
/// receiver, ...) never share state. Satisfies UniformRandomBitGenerator.
class RandomStream {
public:
    using result_type = std::uint64_t;

    explicit RandomStream(std::uint64_t seed = 0) noexcept;

    /// Expands a byte seed (e.g. a 32-byte protocol seed) into a stream.
    static RandomStream from_bytes(std::span<const std::uint8_t> seed) noexcept;

    RandomStream derive(std::string_view label) const noexcept;
    RandomStream derive(std::uint64_t index) const noexcept;

    std::uint64_t key() const noexcept { return key_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next_u64(); }

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    /// Uniform integer in [0, n), unbiased. n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    double normal() noexcept;
    double exponential(double rate) noexcept;
    std::uint32_t poisson(double mean) noexcept;

private:
    void refill() noexcept;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    unsigned used_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

} // namespace dqkd
