#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>

#include "grwlab/errors.hpp"

namespace grwlab {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of stream `index` under `master_seed`:
///   splitmix64(splitmix64(master_seed) ^ (index * 0x9E3779B97F4A7C15)).
/// Streams depend only on (master_seed, index), never on execution order.
inline constexpr std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master_seed) ^ (index * 0x9E3779B97F4A7C15ULL));
}

class RngStream {
public:
    explicit RngStream(std::uint64_t master_seed, std::uint64_t index = 0)
        : master_seed_(master_seed), index_(index), engine_(stream_seed(master_seed, index)) {}

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t index() const noexcept { return index_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal variate (Box-Muller, one output per call).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t master_seed_;
    std::uint64_t index_;
    std::mt19937_64 engine_;
};

/// Exponential waiting time with the given rate by inversion; empty when the
/// rate is zero (no collapse ever happens).
inline std::optional<double> sample_next_hit_time(double rate, RngStream& rng) {
    if (!std::isfinite(rate)) throw DomainError("rate must be finite");
    if (rate < 0.0) throw DomainError("rate must be non-negative");
    if (rate == 0.0) return std::nullopt;
    return -std::log(rng.uniform_pos()) / rate;
}

}  // namespace grwlab
