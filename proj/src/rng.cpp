#include "mvae/rng.hpp"

#include <cmath>
#include <numbers>

#include "mvae/errors.hpp"

namespace mvae {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer; used for seeding and stream derivation only.
std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Philox4x32 round constants.
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 4>& counter,
                                        const std::array<std::uint32_t, 2>& key) {
    std::array<std::uint32_t, 4> c = counter;
    std::uint32_t k0 = key[0];
    std::uint32_t k1 = key[1];
    for (int r = 0; r < 10; ++r) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c[0], hi0, lo0);
        mulhilo(kM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
        k0 += kW0;
        k1 += kW1;
    }
    return c;
}

SeededRng::SeededRng(std::uint64_t seed)
    : key_hi_(mix64(seed + kGolden)), key_lo_(mix64(seed + 2 * kGolden)) {}

SeededRng::SeededRng(std::uint64_t key_hi, std::uint64_t key_lo, int)
    : key_hi_(key_hi), key_lo_(key_lo) {}

SeededRng SeededRng::split(std::uint64_t stream_id) const {
    std::uint64_t h = mix64(stream_id + kGolden);
    return SeededRng(mix64(key_hi_ ^ h), mix64(key_lo_ + h), 0);
}

SeededRng SeededRng::split(std::string_view name) const {
    // FNV-1a 64
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return split(h);
}

std::array<std::uint32_t, 4> SeededRng::block(std::uint64_t ctr) const {
    // The upper counter words carry the stream identity, so distinct streams
    // with equal keys never touch the same block.
    return philox4x32({static_cast<std::uint32_t>(ctr),
                       static_cast<std::uint32_t>(ctr >> 32),
                       static_cast<std::uint32_t>(key_hi_),
                       static_cast<std::uint32_t>(key_hi_ >> 32)},
                      {static_cast<std::uint32_t>(key_lo_),
                       static_cast<std::uint32_t>(key_lo_ >> 32)});
}

std::uint64_t SeededRng::next_u64() {
    auto b = block(counter_++);
    return (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
}

double SeededRng::uniform() {
    // 53 random bits centered in the cell: never exactly 0 or 1.
    std::uint64_t x = next_u64() >> 11;
    return (static_cast<double>(x) + 0.5) * 0x1.0p-53;
}

double SeededRng::standard_normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::uniform_int(std::uint64_t bound) {
    if (bound == 0) throw ArgumentError("uniform_int: bound must be positive");
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace mvae
