#pragma once

#include <cstdint>
#include <initializer_list>

namespace scm {

/// Counter-based 64-bit generator ("scm-ctr64-v1").
///
/// A stream is identified by a 64-bit key; the i-th draw is a pure function
/// of (key, i) built from the SplitMix64 finalizer. Streams for independent
/// work items are derived with `substream`, so results never depend on the
/// order in which items are evaluated. Output is identical on every platform.
class CounterRng {
public:
    static constexpr const char* algorithm_name = "scm-ctr64-v1";

    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(mix(key ^ 0x5ca1ab1e0ddba11ull)) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Child stream keyed by this stream's key and the given path.
    constexpr CounterRng substream(std::initializer_list<std::uint64_t> path) const noexcept {
        std::uint64_t k = key_;
        for (std::uint64_t p : path) k = mix(k ^ mix(p + 0x632be59bd9b4e019ull));
        CounterRng child(0);
        child.key_ = k;
        return child;
    }

    constexpr std::uint64_t next_u64() noexcept { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

    /// Uniform on [0, 1) with 53 bits of precision.
    constexpr double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

    constexpr bool next_bit() noexcept { return (next_u64() >> 63) != 0; }

    /// Uniform integer on [0, n); n must be positive.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's rejection method keeps the draw unbiased.
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t x = next_u64();
            unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
            if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace scm
