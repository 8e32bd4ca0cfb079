#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace optcalib {

// Seeded random source with a bit-stable stream: the mt19937_64 engine is
// specified exactly by the standard, and the uniform/normal transforms below
// avoid the implementation-defined std distributions so that equal seeds give
// equal sequences on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Uniform on [0, 1): top 53 bits of the engine output.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one value per call, no caching, so the
    // stream position is a pure function of the call count.
    double normal() {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace optcalib
