#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tracedvfs {

/// mt19937_64 with distributions written out so draws are identical across
/// standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    explicit Rng(std::seed_seq& seq) : engine_(seq) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Lognormal with mean 1 and the given coefficient of variation.
    double lognormal_unit_mean(double cv) {
        const double sigma2 = std::log1p(cv * cv);
        return std::exp(-0.5 * sigma2 + std::sqrt(sigma2) * normal());
    }

    std::uint64_t next() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace tracedvfs
