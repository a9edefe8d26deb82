#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rydnet {

/// SplitMix64 finalizer. Used for every seed derivation in the project.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `stream` of `parent`:
///   derive_seed(p, s) = splitmix64(p ^ splitmix64(s))
/// Record seeds are derive_seed(global_seed, record_index); this rule is part
/// of the dataset format and must not change.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept
{
    return splitmix64(parent ^ splitmix64(stream));
}

/// Seeded generator with platform-independent draws. The engine is
/// std::mt19937_64 (fully specified by the standard); the mapping to doubles
/// and bounded integers is done here rather than through <random>
/// distributions, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n);

private:
    std::mt19937_64 engine_;
};

} // namespace rydnet
