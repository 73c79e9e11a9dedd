#include "dqkd/postprocessing.hpp"
#include "dqkd/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dqkd {

Seed32 seed_from_u64(std::uint64_t value) noexcept {
    Seed32 seed{};
    std::uint64_t x = value;
    for (std::size_t w = 0; w < 4; ++w) {
        x = splitmix64(x);
        for (std::size_t b = 0; b < 8; ++b) seed[w * 8 + b] = static_cast<std::uint8_t>(x >> (8 * b));
    }
    return seed;
}

namespace {

using Adjacency = std::vector<std::vector<std::uint32_t>>;

bool contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

// Number of 4-cycles through edge (r, c): other columns of r sharing another row with c.
std::size_t cycles_through(const Adjacency& row_cols, const Adjacency& col_rows, std::uint32_t r,
                           std::uint32_t c) {
    std::size_t count = 0;
    for (auto c2 : row_cols[r]) {
        if (c2 == c) continue;
        for (auto r2 : col_rows[c2]) {
            if (r2 != r && contains(col_rows[c], r2)) ++count;
        }
    }
    return count;
}

void replace(std::vector<std::uint32_t>& v, std::uint32_t from, std::uint32_t to) {
    *std::find(v.begin(), v.end(), from) = to;
}

// Swaps edges (r1,c1),(r2,c2) -> (r1,c2),(r2,c1) while that lowers the 4-cycle
// count; degrees are unchanged.
void remove_four_cycles(Adjacency& row_cols, Adjacency& col_rows, RandomStream& rng) {
    const auto m = static_cast<std::uint32_t>(row_cols.size());
    const auto n = static_cast<std::uint32_t>(col_rows.size());
    for (int pass = 0; pass < 8; ++pass) {
        bool changed = false;
        for (std::uint32_t c1 = 0; c1 < n; ++c1) {
            for (std::size_t k = 0; k < col_rows[c1].size(); ++k) {
                const std::uint32_t r1 = col_rows[c1][k];
                const std::size_t here = cycles_through(row_cols, col_rows, r1, c1);
                if (here == 0) continue;
                for (int attempt = 0; attempt < 64; ++attempt) {
                    const auto r2 = static_cast<std::uint32_t>(rng.uniform_int(m));
                    if (r2 == r1 || row_cols[r2].empty()) continue;
                    const std::uint32_t c2 = row_cols[r2][rng.uniform_int(row_cols[r2].size())];
                    if (c2 == c1 || contains(col_rows[c1], r2) || contains(col_rows[c2], r1)) continue;
                    const std::size_t before = here + cycles_through(row_cols, col_rows, r2, c2);
                    replace(row_cols[r1], c1, c2);
                    replace(col_rows[c1], r1, r2);
                    replace(row_cols[r2], c2, c1);
                    replace(col_rows[c2], r2, r1);
                    const std::size_t after = cycles_through(row_cols, col_rows, r1, c2) +
                                              cycles_through(row_cols, col_rows, r2, c1);
                    if (after < before) {
                        changed = true;
                        break;
                    }
                    replace(row_cols[r1], c2, c1);
                    replace(col_rows[c1], r2, r1);
                    replace(row_cols[r2], c1, c2);
                    replace(col_rows[c2], r1, r2);
                }
            }
        }
        if (!changed) break;
    }
}

} // namespace

LdpcCode build_code(std::span<const std::uint8_t> seed, std::uint32_t n, std::uint32_t m) {
    if (m == 0 || n == 0) throw DomainError("build_code: empty code");
    if (m >= n) throw DomainError("build_code: need m < n");
    if (m < kColumnWeight) throw DomainError("build_code: need at least 3 checks");

    RandomStream rng = RandomStream::from_bytes(seed).derive("ldpc");
    Adjacency row_cols(m);
    Adjacency col_rows(n);
    std::vector<std::uint32_t> degree(m, 0);

    // Final row degrees are floor or floor+1, with exactly `heavy_quota` rows at floor+1.
    const std::uint64_t edges_total = static_cast<std::uint64_t>(kColumnWeight) * n;
    const auto floor_deg = static_cast<std::uint32_t>(edges_total / m);
    const auto heavy_quota = static_cast<std::uint32_t>(edges_total % m);
    std::uint32_t heavy = 0;

    constexpr std::uint32_t kUnreached = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> row_level(m, kUnreached);
    std::vector<std::uint32_t> col_stamp(n, kUnreached);
    std::vector<std::uint32_t> touched_rows;
    std::vector<std::uint32_t> frontier, next;
    std::vector<std::uint32_t> candidates;

    for (std::uint32_t v = 0; v < n; ++v) {
        for (std::uint32_t e = 0; e < kColumnWeight; ++e) {
            const std::uint32_t cap = heavy < heavy_quota ? floor_deg + 1 : floor_deg;
            auto is_candidate = [&](std::uint32_t r) {
                return degree[r] < cap && !contains(col_rows[v], r);
            };
            std::size_t open = 0;
            for (std::uint32_t r = 0; r < m; ++r) open += is_candidate(r) ? 1 : 0;
            std::size_t unreached = open;

            // Breadth-first expansion from v; stop once every open row is reached
            // or the component is exhausted.
            for (auto r : touched_rows) row_level[r] = kUnreached;
            touched_rows.clear();
            frontier.assign(1, v);
            col_stamp[v] = v;
            std::uint32_t level = 0;
            std::uint32_t last_level = 0;
            while (!frontier.empty() && unreached > 0) {
                next.clear();
                for (auto c : frontier) {
                    for (auto r : col_rows[c]) {
                        if (row_level[r] != kUnreached) continue;
                        row_level[r] = level;
                        touched_rows.push_back(r);
                        if (is_candidate(r)) {
                            --unreached;
                            last_level = level;
                        }
                        for (auto c2 : row_cols[r]) {
                            if (col_stamp[c2] == v) continue;
                            col_stamp[c2] = v;
                            next.push_back(c2);
                        }
                    }
                }
                frontier.swap(next);
                ++level;
            }

            // Farthest open rows, lightest first.
            candidates.clear();
            std::uint32_t best_deg = kUnreached;
            for (std::uint32_t r = 0; r < m; ++r) {
                if (!is_candidate(r)) continue;
                const bool far = unreached > 0 ? row_level[r] == kUnreached : row_level[r] == last_level;
                if (!far) continue;
                if (degree[r] < best_deg) {
                    best_deg = degree[r];
                    candidates.clear();
                }
                if (degree[r] == best_deg) candidates.push_back(r);
            }
            if (candidates.empty()) {
                // Remaining capacity sits in rows this column already uses.
                for (std::uint32_t r = 0; r < m; ++r) {
                    if (contains(col_rows[v], r)) continue;
                    if (degree[r] < best_deg) {
                        best_deg = degree[r];
                        candidates.clear();
                    }
                    if (degree[r] == best_deg) candidates.push_back(r);
                }
            }
            const std::uint32_t pick = candidates[rng.uniform_int(candidates.size())];
            row_cols[pick].push_back(v);
            col_rows[v].push_back(pick);
            if (++degree[pick] == floor_deg + 1) ++heavy;
        }
    }
    remove_four_cycles(row_cols, col_rows, rng);

    LdpcCode code;
    code.n_ = n;
    code.m_ = m;
    code.column_weight_ = kColumnWeight;
    code.check_start_.assign(m + 1, 0);
    for (std::uint32_t r = 0; r < m; ++r) {
        std::sort(row_cols[r].begin(), row_cols[r].end());
        code.check_start_[r + 1] = code.check_start_[r] + static_cast<std::uint32_t>(row_cols[r].size());
        code.check_vars_.insert(code.check_vars_.end(), row_cols[r].begin(), row_cols[r].end());
    }
    code.var_start_.assign(n + 1, 0);
    for (std::uint32_t c = 0; c < n; ++c) {
        std::sort(col_rows[c].begin(), col_rows[c].end());
        code.var_start_[c + 1] = code.var_start_[c] + static_cast<std::uint32_t>(col_rows[c].size());
        code.var_checks_.insert(code.var_checks_.end(), col_rows[c].begin(), col_rows[c].end());
    }
    code.edge_var_slot_.resize(code.check_vars_.size());
    std::vector<std::uint32_t> fill(code.var_start_.begin(), code.var_start_.end() - 1);
    for (std::uint32_t r = 0; r < m; ++r) {
        for (std::uint32_t e = code.check_start_[r]; e < code.check_start_[r + 1]; ++e) {
            code.edge_var_slot_[e] = fill[code.check_vars_[e]]++;
        }
    }
    return code;
}

std::size_t LdpcCode::count_four_cycles() const {
    std::size_t cycles = 0;
    std::vector<std::uint32_t> shared(m_, 0);
    std::vector<std::uint32_t> touched;
    for (std::uint32_t r = 0; r < m_; ++r) {
        touched.clear();
        for (auto c : check(r)) {
            for (auto r2 : column(c)) {
                if (r2 <= r) continue;
                if (shared[r2]++ == 0) touched.push_back(r2);
            }
        }
        for (auto r2 : touched) {
            cycles += static_cast<std::size_t>(shared[r2]) * (shared[r2] - 1) / 2;
            shared[r2] = 0;
        }
    }
    return cycles;
}

Bits syndrome(const LdpcCode& code, std::span<const std::uint8_t> bits) {
    if (bits.size() != code.n()) throw DomainError("syndrome: length mismatch");
    Bits s(code.m(), 0);
    for (std::uint32_t r = 0; r < code.m(); ++r) {
        std::uint8_t acc = 0;
        for (auto c : code.check(r)) acc ^= bits[c] & 1u;
        s[r] = acc;
    }
    return s;
}

std::uint32_t check_budget(double f, double qber, std::uint32_t n) {
    const double m = std::ceil(f * binary_entropy(std::clamp(qber, 0.0, 0.5)) * n);
    return static_cast<std::uint32_t>(std::clamp(m, 1.0, static_cast<double>(n - 1)));
}

namespace {

constexpr double kLlrClamp = 30.0;

bool syndrome_matches(const LdpcCode& code, std::span<const std::uint8_t> bits,
                      std::span<const std::uint8_t> target) {
    for (std::uint32_t r = 0; r < code.m(); ++r) {
        std::uint8_t acc = 0;
        for (auto c : code.check(r)) acc ^= bits[c];
        if (acc != (target[r] & 1u)) return false;
    }
    return true;
}

} // namespace

std::optional<DecodeResult> decode(const LdpcCode& code, std::span<const std::uint8_t> noisy_bits,
                                   std::span<const std::uint8_t> target_syndrome, double qber_prior,
                                   int max_iterations) {
    if (noisy_bits.size() != code.n() || target_syndrome.size() != code.m()) {
        throw DomainError("decode: length mismatch");
    }
    if (!(qber_prior > 0.0 && qber_prior < 0.5)) throw DomainError("decode: prior outside (0, 0.5)");

    DecodeResult result;
    result.bits.assign(noisy_bits.begin(), noisy_bits.end());
    for (auto& b : result.bits) b &= 1u;
    if (syndrome_matches(code, result.bits, target_syndrome)) return result;

    const double llr0 = std::log((1.0 - qber_prior) / qber_prior);
    std::vector<double> posterior(code.n());
    for (std::uint32_t i = 0; i < code.n(); ++i) posterior[i] = result.bits[i] ? -llr0 : llr0;
    std::vector<double> check_msg(code.edges(), 0.0);
    std::vector<double> incoming, tanh_half, prefix;

    for (int it = 1; it <= max_iterations; ++it) {
        for (std::uint32_t r = 0; r < code.m(); ++r) {
            const auto vars = code.check(r);
            const std::size_t base = code.check_offset(r);
            const std::size_t deg = vars.size();
            incoming.resize(deg);
            tanh_half.resize(deg);
            prefix.resize(deg + 1);
            for (std::size_t k = 0; k < deg; ++k) {
                incoming[k] = std::clamp(posterior[vars[k]] - check_msg[base + k], -kLlrClamp, kLlrClamp);
                tanh_half[k] = std::tanh(0.5 * incoming[k]);
            }
            prefix[0] = target_syndrome[r] ? -1.0 : 1.0;
            for (std::size_t k = 0; k < deg; ++k) prefix[k + 1] = prefix[k] * tanh_half[k];
            double suffix = 1.0;
            for (std::size_t k = deg; k-- > 0;) {
                double prod = prefix[k] * suffix;
                prod = std::clamp(prod, -0.999999999999, 0.999999999999);
                const double msg = 2.0 * std::atanh(prod);
                check_msg[base + k] = msg;
                posterior[vars[k]] = incoming[k] + msg;
                suffix *= tanh_half[k];
            }
        }
        for (std::uint32_t i = 0; i < code.n(); ++i) result.bits[i] = posterior[i] < 0.0 ? 1 : 0;
        if (syndrome_matches(code, result.bits, target_syndrome)) {
            result.iterations = it;
            return result;
        }
    }
    return std::nullopt;
}

} // namespace dqkd
