// Deterministic seeded randomness. Streams are keyed by
// (master seed, domain tag, item id) through SHA-256 so every sample gets an
// independent, platform-stable stream. std:: distributions are avoided on
// purpose: their output is not pinned by the standard across libraries.

#pragma once

#include "typobench/detail/sha256.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace typobench::detail {

/// splitmix64; passes BigCrush, trivially portable.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Unbiased draw from [0, n). n must be >= 1.
    std::uint64_t bounded(std::uint64_t n) {
        // rejection below 2^64 mod n keeps the draw exactly uniform
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    double unit_real() {
        // 53 mantissa bits -> [0,1)
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

/// Stream seed for (master_seed, domain, id). Stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view domain,
                                 std::string_view id) {
    Sha256 h;
    std::uint8_t seed_be[8];
    for (int i = 0; i < 8; ++i) seed_be[i] = static_cast<std::uint8_t>(master_seed >> (56 - 8 * i));
    h.update(seed_be, 8);
    h.update("\x1f", 1);
    h.update(domain);
    h.update("\x1f", 1);
    h.update(id);
    auto d = h.digest();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

inline SplitMix64 keyed_rng(std::uint64_t master_seed, std::string_view domain,
                            std::string_view id) {
    return SplitMix64(derive_seed(master_seed, domain, id));
}

/// In-place Fisher-Yates driven by the given stream.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace typobench::detail
