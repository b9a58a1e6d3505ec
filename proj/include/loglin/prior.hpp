#pragma once

#include <cmath>

#include "loglin/errors.hpp"

namespace loglin {

// Prior over parameters and structures. Each nonzero interaction parameter
// gets an independent zero-mean normal with standard deviation sigma.
// Clusters enter a structure independently: singletons with probability
// q_single, larger clusters with probability q_high.
struct PriorSpec {
    double sigma = 2.0;
    double q_high = 0.1;
    double q_single = 0.9;

    void validate() const {
        if (!(sigma > 0.0)) throw InvalidArgumentError("prior sigma must be > 0");
        if (!(q_high > 0.0 && q_high < 1.0)) throw InvalidArgumentError("q_high must be in (0,1)");
        if (!(q_single > 0.0 && q_single < 1.0)) throw InvalidArgumentError("q_single must be in (0,1)");
    }
};

inline double log_normal_density(double x, double sigma) {
    static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
    return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * (x / sigma) * (x / sigma);
}

}  // namespace loglin
