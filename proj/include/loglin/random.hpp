#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace loglin {

// All stochastic code draws through these two helpers so that a seed pins
// the exact bit stream independently of the standard library's distribution
// implementations.

// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
inline double uniform_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes two uniforms.
inline double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform_double(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform_double(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace loglin
