#pragma once

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdint>
#include <istream>
#include <json.hpp>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/inference.hpp"
#include "loglin/model.hpp"
#include "loglin/prior.hpp"
#include "loglin/random.hpp"
#include "loglin/search.hpp"
#include "loglin/types.hpp"

namespace loglin {

// Forward sampling from a fully specified model, exhaustive structure
// enumeration, and two independent references (adaptive quadrature and prior
// Monte Carlo) for the Laplace marginal likelihood. These are the ground
// truth the fast approximations are tested against.

struct GeneratorSpec {
    int k = 1;
    Structure structure;
    std::vector<double> theta;
    std::uint64_t n_obs = 1;
    std::uint64_t seed = 0;
};

// JSON file: {"k":6,"n":2000,"seed":1,"clusters":[{"nodes":[4,6],"theta":0.45},...]}
// with 1-based node labels.
inline GeneratorSpec load_generator_spec(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid generator spec: ") + e.what(), 1);
    }
    GeneratorSpec spec;
    try {
        spec.k = j.at("k").get<int>();
        spec.n_obs = j.at("n").get<std::uint64_t>();
        spec.seed = j.value("seed", std::uint64_t{0});
        std::vector<Cluster> clusters;
        for (const auto& item : j.at("clusters")) {
            std::vector<int> nodes;
            for (int label : item.at("nodes").get<std::vector<int>>()) {
                if (label < 1 || label > spec.k)
                    throw InvalidArgumentError("node label " + std::to_string(label) + " outside [1," +
                                               std::to_string(spec.k) + "]");
                nodes.push_back(label - 1);
            }
            clusters.push_back(Cluster::from_nodes(nodes));
            spec.theta.push_back(item.at("theta").get<double>());
        }
        // Clusters may arrive in any order; sort theta alongside the
        // canonical cluster ordering.
        std::vector<std::size_t> perm(clusters.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::sort(perm.begin(), perm.end(),
                  [&](std::size_t a, std::size_t b) { return cluster_less(clusters[a], clusters[b]); });
        std::vector<Cluster> sorted_clusters;
        std::vector<double> sorted_theta;
        for (std::size_t i : perm) {
            sorted_clusters.push_back(clusters[i]);
            sorted_theta.push_back(spec.theta[i]);
        }
        spec.structure = Structure(spec.k, sorted_clusters);
        spec.theta = std::move(sorted_theta);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid generator spec: ") + e.what(), 1);
    }
    if (spec.n_obs < 1) throw InvalidArgumentError("generator spec needs n >= 1");
    check_theta(spec.structure, spec.theta);
    return spec;
}

// N independent draws by inverse CDF over the dense probability table.
inline ConfigCounts sample_configurations(const GeneratorSpec& spec, int enum_limit = kDefaultEnumLimit) {
    const std::vector<double> p = config_distribution(spec.structure, spec.theta, enum_limit);
    std::vector<double> cdf(p.size());
    double run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        run += p[i];
        cdf[i] = run;
    }
    std::mt19937_64 rng(spec.seed);
    ConfigCounts out(spec.k);
    for (std::uint64_t i = 0; i < spec.n_obs; ++i) {
        const double u = uniform_double(rng);
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto idx = it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
        out.add(Config(static_cast<std::uint64_t>(idx)));
    }
    return out;
}

// Every duplicate-free structure over the candidate clusters of order
// <= max_order. With singleton_toggle off, all singletons are held fixed in
// every structure and only larger clusters toggle.
inline std::vector<Structure> enumerate_structures(int k, int max_order, bool singleton_toggle) {
    if (k > kDefaultEnumLimit) throw CapacityError("candidate enumeration needs 2^" + std::to_string(k) + " masks");
    if (max_order < 1 || max_order > k) throw InvalidArgumentError("max_order must be in [1,k]");
    std::vector<Cluster> toggleable;
    std::vector<Cluster> fixed;
    const std::uint64_t nmask = std::uint64_t{1} << k;
    for (std::uint64_t m = 1; m < nmask; ++m) {
        const int r = std::popcount(m);
        if (r > max_order) continue;
        if (r == 1 && !singleton_toggle)
            fixed.emplace_back(m);
        else
            toggleable.emplace_back(m);
    }
    std::sort(toggleable.begin(), toggleable.end(), cluster_less);
    if (toggleable.size() > 16)
        throw CapacityError("exhaustive enumeration over " + std::to_string(toggleable.size()) +
                            " toggleable clusters exceeds the 2^16 limit");
    const std::uint64_t count = std::uint64_t{1} << toggleable.size();
    std::vector<Structure> out;
    out.reserve(count);
    for (std::uint64_t subset = 0; subset < count; ++subset) {
        std::vector<Cluster> cs = fixed;
        for (std::size_t i = 0; i < toggleable.size(); ++i)
            if ((subset >> i) & 1u) cs.push_back(toggleable[i]);
        out.emplace_back(k, std::move(cs));
    }
    return out;
}

// Exhaustive normalized posterior over every enumerable structure: the
// ground truth that chain visit frequencies are checked against. Sorted by
// probability (descending, ties by hash).
inline std::vector<std::pair<Structure, double>> exact_structure_posterior(const ConfigCounts& data,
                                                                           const PriorSpec& prior, int max_order,
                                                                           bool singleton_toggle = false,
                                                                           const FitOptions& opts = {}) {
    const std::vector<Structure> all = enumerate_structures(data.k(), max_order, singleton_toggle);
    std::vector<double> scores(all.size(), kNegInf);
    for (std::size_t i = 0; i < all.size(); ++i) {
        try {
            const StructureFit fit = newton_map(all[i], data, prior, opts);
            if (fit.converged) scores[i] = fit.log_marginal + structure_log_prior(all[i], prior, max_order);
        } catch (const FitError&) {
            // unscorable structure keeps probability zero
        }
    }
    const double lse = log_sum_exp(scores);
    std::vector<std::pair<Structure, double>> out;
    out.reserve(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) out.emplace_back(all[i], std::exp(scores[i] - lse));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first.hash() < b.first.hash();
    });
    return out;
}

inline double exact_inclusion_prob(const std::vector<std::pair<Structure, double>>& posterior, Cluster xi) {
    double p = 0.0;
    for (const auto& [s, prob] : posterior)
        if (s.contains(xi)) p += prob;
    return p;
}

struct McEstimate {
    double estimate;
    double std_error;
};

// Monte Carlo marginal likelihood: log of the average likelihood over prior
// draws of theta, with a delta-method standard error. Stochastic reference
// only; unbiased for the marginal probability, not for its log.
inline McEstimate mc_log_marginal(const Structure& structure, const ConfigCounts& data, const PriorSpec& prior,
                                  std::uint64_t n_draws, std::mt19937_64& rng, int enum_limit = kDefaultEnumLimit) {
    prior.validate();
    if (n_draws < 1000) throw InvalidArgumentError("mc_log_marginal needs at least 1000 draws");
    const std::vector<double> stats = sufficient_stats(data, structure);
    const auto n = static_cast<double>(data.total());
    const std::size_t d = structure.size();
    if (d == 0) return {-n * structure.k() * std::log(2.0), 0.0};

    std::vector<double> loglik(n_draws);
    std::vector<double> theta(d);
    for (std::uint64_t s = 0; s < n_draws; ++s) {
        for (std::size_t j = 0; j < d; ++j) theta[j] = prior.sigma * standard_normal(rng);
        double ll = theta_empty(structure, theta, enum_limit);
        for (std::size_t j = 0; j < d; ++j) ll += theta[j] * stats[j];
        loglik[s] = n * ll;
    }
    const double m = *std::max_element(loglik.begin(), loglik.end());
    double mean = 0.0;
    for (double l : loglik) mean += std::exp(l - m);
    mean /= static_cast<double>(n_draws);
    double var = 0.0;
    for (double l : loglik) {
        const double dlt = std::exp(l - m) - mean;
        var += dlt * dlt;
    }
    var /= static_cast<double>(n_draws - 1);
    const double se_mean = std::sqrt(var / static_cast<double>(n_draws));
    return {m + std::log(mean), se_mean / mean};
}

namespace detail {

// Integrand exponent of the marginal likelihood: log L(theta) + log g(theta).
class MarginalIntegrand {
   public:
    MarginalIntegrand(const Structure& structure, std::vector<double> stats, double n_obs, double sigma,
                      int enum_limit)
        : structure_(structure), stats_(std::move(stats)), n_obs_(n_obs), sigma_(sigma), enum_limit_(enum_limit) {}

    double log_value(const std::vector<double>& theta) const {
        double ll = theta_empty(structure_, theta, enum_limit_);
        for (std::size_t j = 0; j < theta.size(); ++j) ll += theta[j] * stats_[j];
        double lp = 0.0;
        for (double t : theta) lp += log_normal_density(t, sigma_);
        return n_obs_ * ll + lp;
    }

   private:
    const Structure& structure_;
    std::vector<double> stats_;
    double n_obs_;
    double sigma_;
    int enum_limit_;
};

}  // namespace detail

// Deterministic reference for the marginal likelihood in one or two
// dimensions: adaptive Gauss-Kronrod over [-8 sigma, 8 sigma] per dimension
// (prior mass outside is below 1e-15), relative tolerance 1e-8, computed on
// a max-shifted exponent for stability.
inline double quadrature_log_marginal(const Structure& structure, const ConfigCounts& data, const PriorSpec& prior,
                                      int enum_limit = kDefaultEnumLimit) {
    prior.validate();
    const std::size_t d = structure.size();
    const auto n = static_cast<double>(data.total());
    if (d == 0) return -n * structure.k() * std::log(2.0);
    if (d > 2) throw CapacityError("quadrature reference supports at most 2 parameters, got " + std::to_string(d));

    const detail::MarginalIntegrand f(structure, sufficient_stats(data, structure), n, prior.sigma, enum_limit);
    const double lim = 8.0 * prior.sigma;
    using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;

    // Coarse grid scan for the exponent shift.
    double shift = -std::numeric_limits<double>::infinity();
    const int grid = d == 1 ? 401 : 81;
    std::vector<double> theta(d);
    if (d == 1) {
        for (int i = 0; i < grid; ++i) {
            theta[0] = -lim + 2.0 * lim * i / (grid - 1);
            shift = std::max(shift, f.log_value(theta));
        }
        const double integral = Quad::integrate(
            [&](double t) {
                return std::exp(f.log_value({t}) - shift);
            },
            -lim, lim, 15, 1e-8);
        return shift + std::log(integral);
    }

    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            theta[0] = -lim + 2.0 * lim * i / (grid - 1);
            theta[1] = -lim + 2.0 * lim * j / (grid - 1);
            shift = std::max(shift, f.log_value(theta));
        }
    const double integral = Quad::integrate(
        [&](double t0) {
            return Quad::integrate(
                [&](double t1) {
                    return std::exp(f.log_value({t0, t1}) - shift);
                },
                -lim, lim, 15, 1e-9);
        },
        -lim, lim, 15, 1e-8);
    return shift + std::log(integral);
}

}  // namespace loglin
