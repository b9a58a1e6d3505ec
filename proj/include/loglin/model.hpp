#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/types.hpp"

namespace loglin {

// log p(x) = theta_empty + sum over clusters of theta_xi * T_xi(x).
// theta_empty is never a free parameter: it is the value that makes the
// probabilities sum to 1 over all 2^k configurations, computed here by dense
// enumeration. All sums of exponentials go through max-shifted log-sum-exp.

inline void check_enum_limit(int k, int enum_limit) {
    if (k > enum_limit)
        throw CapacityError("dense enumeration needs 2^" + std::to_string(k) +
                            " configurations, above the limit of 2^" + std::to_string(enum_limit));
}

inline void check_theta(const Structure& structure, const std::vector<double>& theta) {
    if (theta.size() != structure.size())
        throw InvalidArgumentError("theta has dimension " + std::to_string(theta.size()) + " but structure has " +
                                   std::to_string(structure.size()) + " clusters");
    for (double t : theta)
        if (!std::isfinite(t)) throw InvalidArgumentError("theta contains a non-finite entry");
}

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Unnormalized log weights h0(x) = sum_xi theta_xi T_xi(x) for every
// configuration bitmask, dense and indexed by bitmask.
inline std::vector<double> unnormalized_log_weights(const Structure& structure, const std::vector<double>& theta,
                                                    int enum_limit = kDefaultEnumLimit) {
    check_enum_limit(structure.k(), enum_limit);
    check_theta(structure, theta);
    const std::uint64_t n = std::uint64_t{1} << structure.k();
    std::vector<double> h(n, 0.0);
    for (std::size_t j = 0; j < structure.size(); ++j) {
        const std::uint64_t m = structure.clusters()[j].mask;
        const double t = theta[j];
        for (std::uint64_t x = 0; x < n; ++x)
            if ((x & m) == m) h[x] += t;
    }
    return h;
}

// The empty-cluster coefficient: -log sum_x exp(h0(x)).
inline double theta_empty(const Structure& structure, const std::vector<double>& theta,
                          int enum_limit = kDefaultEnumLimit) {
    return -log_sum_exp(unnormalized_log_weights(structure, theta, enum_limit));
}

// log p(x) for a single configuration.
inline double config_log_prob(Config x, const Structure& structure, const std::vector<double>& theta,
                              int enum_limit = kDefaultEnumLimit) {
    if (structure.k() < 64 && (x.bits >> structure.k()) != 0)
        throw InvalidArgumentError("configuration has more than k bits");
    check_theta(structure, theta);
    double h = theta_empty(structure, theta, enum_limit);
    for (std::size_t j = 0; j < structure.size(); ++j)
        h += theta[j] * cluster_indicator(x, structure.clusters()[j]);
    return h;
}

// Dense probability table indexed by configuration bitmask; entries are
// positive and sum to 1 up to floating point.
inline std::vector<double> config_distribution(const Structure& structure, const std::vector<double>& theta,
                                               int enum_limit = kDefaultEnumLimit) {
    std::vector<double> h = unnormalized_log_weights(structure, theta, enum_limit);
    const double lse = log_sum_exp(h);
    for (double& v : h) v = std::exp(v - lse);
    return h;
}

// Superset sums S[m] = sum over x >= m (as bitsets) of table[x], for every
// mask m, in one k*2^k pass. S[cluster.mask] is the cluster's moment when the
// input is a probability table.
inline std::vector<double> superset_sums(std::vector<double> table, int k) {
    const std::uint64_t n = std::uint64_t{1} << k;
    for (int b = 0; b < k; ++b) {
        const std::uint64_t bit = std::uint64_t{1} << b;
        for (std::uint64_t m = 0; m < n; ++m)
            if (!(m & bit)) table[m] += table[m | bit];
    }
    return table;
}

// E[T_xi] under the model: the probability that every node of the cluster is
// active simultaneously. Equals 1 for the empty cluster.
inline double cluster_moment(const Structure& structure, const std::vector<double>& theta, Cluster xi,
                             int enum_limit = kDefaultEnumLimit) {
    if (structure.k() < 64 && (xi.mask >> structure.k()) != 0)
        throw InvalidArgumentError("cluster " + xi.label_1based() + " references a node >= k");
    if (xi.empty()) return 1.0;
    const std::vector<double> p = config_distribution(structure, theta, enum_limit);
    const std::uint64_t n = std::uint64_t{1} << structure.k();
    double s = 0.0;
    for (std::uint64_t x = 0; x < n; ++x)
        if ((x & xi.mask) == xi.mask) s += p[x];
    return s;
}

}  // namespace loglin
