#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mvae {

// Raw Philox4x32-10 block function, the deterministic core behind SeededRng.
std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 4>& counter,
                                        const std::array<std::uint32_t, 2>& key);

// Counter-based generator (Philox4x32-10). Draw order is a pure function of
// (key, counter), so a generator can be copied to replay a stream, and
// split() yields statistically independent child streams without any shared
// state. The counter advances by one block per draw, never by a
// data-dependent amount, which keeps replay deterministic.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    // Independent child stream. The parent is not advanced.
    SeededRng split(std::uint64_t stream_id) const;
    SeededRng split(std::string_view name) const;

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    // Box-Muller, one normal per draw (no cached spare).
    double standard_normal();
    // Uniform over [0, bound) by rejection; bound must be > 0.
    std::uint64_t uniform_int(std::uint64_t bound);

    std::uint64_t counter() const { return counter_; }

private:
    SeededRng(std::uint64_t key_hi, std::uint64_t key_lo, int);
    std::array<std::uint32_t, 4> block(std::uint64_t ctr) const;

    std::uint64_t key_hi_;
    std::uint64_t key_lo_;
    std::uint64_t counter_ = 0;
};

// Fisher-Yates over indices 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng);

}  // namespace mvae
