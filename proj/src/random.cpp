#include "dqkd/random.hpp"

#include <cmath>
#include <numbers>

namespace dqkd {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) noexcept : key_(splitmix64(seed)) {}

RandomStream RandomStream::from_bytes(std::span<const std::uint8_t> seed) noexcept {
    std::uint64_t acc = 0x6a09e667f3bcc908ull;
    std::uint64_t word = 0;
    std::size_t i = 0;
    for (; i < seed.size(); ++i) {
        word |= static_cast<std::uint64_t>(seed[i]) << (8 * (i % 8));
        if (i % 8 == 7) {
            acc = splitmix64(acc ^ word);
            word = 0;
        }
    }
    if (i % 8 != 0) acc = splitmix64(acc ^ word);
    return RandomStream(acc ^ seed.size());
}

RandomStream RandomStream::derive(std::string_view label) const noexcept {
    return RandomStream(key_ ^ splitmix64(fnv1a(label)));
}

RandomStream RandomStream::derive(std::uint64_t index) const noexcept {
    return RandomStream(key_ ^ splitmix64(index ^ 0xA5A5A5A55A5A5A5Aull));
}

void RandomStream::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                           static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(key_),
                                           static_cast<std::uint32_t>(key_ >> 32)};
    block_ = philox4x32_10(ctr, key);
    ++counter_;
    used_ = 0;
}

std::uint32_t RandomStream::next_u32() noexcept {
    if (used_ == 4) refill();
    return block_[used_++];
}

std::uint64_t RandomStream::next_u64() noexcept {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double RandomStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::uniform_int(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double RandomStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double RandomStream::exponential(double rate) noexcept {
    return -std::log(1.0 - uniform()) / rate;
}

std::uint32_t RandomStream::poisson(double mean) noexcept {
    if (mean <= 0.0) return 0;
    if (mean > 30.0) {
        // Sum of independent Poisson pieces keeps the inversion exact.
        const int pieces = static_cast<int>(std::ceil(mean / 30.0));
        std::uint32_t total = 0;
        for (int i = 0; i < pieces; ++i) total += poisson(mean / pieces);
        return total;
    }
    double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint32_t k = 0;
    while (u >= cdf) {
        ++k;
        p *= mean / k;
        cdf += p;
        if (p < 1e-300 && cdf <= u) break;
    }
    return k;
}

} // namespace dqkd
