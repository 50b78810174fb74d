#pragma once

#include <cstdint>
#include <random>

namespace pinnlab {

/// Seeded RNG wrapper. Every stochastic component takes an explicit 64-bit
/// seed; identical seeds give identical draws, independent of platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {  // inclusive range
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pinnlab
