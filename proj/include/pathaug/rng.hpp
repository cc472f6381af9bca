#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace pathaug {

inline std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** with SplitMix64 seeding.
///
/// All derived draws are defined here in terms of integer operations and
/// IEEE double arithmetic only, so a seed reproduces the same values on every
/// platform (std:: distributions are implementation-defined and are not used).
///
///   uniform()      one 64-bit output, top 53 bits, in [0,1)
///   uniform(a,b)   a + (b-a)*uniform()
///   below(n)       uniform() * n truncated, one output
///   normal()       Box-Muller cosine branch, two outputs (u1 first)
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept
    {
        std::uint64_t sm = seed;
        for (auto& s : state_) s = splitmix64(sm);
    }

    /// Independent stream keyed by (seed, index), e.g. one per image.
    static Rng derive(std::uint64_t seed, std::uint64_t index) noexcept
    {
        std::uint64_t sm = seed ^ 0x6A09E667F3BCC909ULL;
        const std::uint64_t a = splitmix64(sm);
        std::uint64_t sm2 = index + a;
        return Rng(splitmix64(sm2) ^ a);
    }

    static Rng derive(std::uint64_t seed, std::uint64_t major, std::uint64_t minor) noexcept
    {
        std::uint64_t sm = major ^ 0xBB67AE8584CAA73BULL;
        return derive(seed ^ splitmix64(sm), minor);
    }

    std::uint64_t next() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) noexcept
    {
        const auto v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    double normal() noexcept
    {
        const double u1 = 1.0 - uniform(); // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

} // namespace pathaug
