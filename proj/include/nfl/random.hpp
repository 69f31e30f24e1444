#pragma once
#include <cstdint>

#include <nfl/linalg.hpp>

namespace nfl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Counter-based stream: draw i depends only on (seed, i), so any partition of the
 * work across threads reproduces the same numbers.
 */
class CounterRng
{
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : key_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    constexpr std::uint64_t bits(std::uint64_t i) const noexcept { return splitmix64(key_ + splitmix64(i)); }

    /// Uniform on (0, 1), never 0 or 1.
    constexpr double uniform(std::uint64_t i) const noexcept
    {
        return (static_cast<double>(bits(i) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal by inversion.
    double normal(std::uint64_t i) const { return normal_quantile(uniform(i)); }

private:
    std::uint64_t key_;
};

} // namespace nfl
