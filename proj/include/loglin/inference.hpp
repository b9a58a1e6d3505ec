#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/model.hpp"
#include "loglin/prior.hpp"
#include "loglin/types.hpp"

namespace loglin {

// MAP fitting of a fixed structure. The data enter only through the marginal
// frequencies (one per cluster) and the sample size N, so two datasets with
// equal counts maps produce bit-identical fits.

struct FitOptions {
    double tol = 1e-8;    // sup-norm of the gradient at exit
    int max_iter = 100;
    int enum_limit = kDefaultEnumLimit;
};

struct StructureFit {
    Structure structure;
    std::vector<double> theta_map;   // posterior mode, aligned with structure.clusters()
    Eigen::MatrixXd covariance;      // inverse negated Hessian at the mode
    double log_marginal = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    double gradient_norm = std::numeric_limits<double>::infinity();
    std::vector<double> objective_trace;  // objective after each accepted step
};

namespace detail {

inline void check_stats(const Structure& structure, const std::vector<double>& stats) {
    if (stats.size() != structure.size())
        throw InvalidArgumentError("stats have dimension " + std::to_string(stats.size()) + " but structure has " +
                                   std::to_string(structure.size()) + " clusters");
}

// theta_empty plus the dense probability table, sharing one enumeration pass.
inline std::pair<double, std::vector<double>> normalizer_and_distribution(const Structure& structure,
                                                                          const std::vector<double>& theta,
                                                                          int enum_limit) {
    std::vector<double> h = unnormalized_log_weights(structure, theta, enum_limit);
    const double lse = log_sum_exp(h);
    for (double& v : h) v = std::exp(v - lse);
    return {-lse, std::move(h)};
}

}  // namespace detail

// Log of the joint mass/density of data and parameters, up to the constant
// that normalizes the posterior: N*(theta_empty + sum theta*tbar) plus the
// log prior density of theta.
inline double log_unnormalized_posterior(const Structure& structure, const std::vector<double>& theta,
                                         const std::vector<double>& stats, std::uint64_t n_obs,
                                         const PriorSpec& prior, int enum_limit = kDefaultEnumLimit) {
    detail::check_stats(structure, stats);
    check_theta(structure, theta);
    double ll = theta_empty(structure, theta, enum_limit);
    for (std::size_t j = 0; j < theta.size(); ++j) ll += theta[j] * stats[j];
    double lp = 0.0;
    for (double t : theta) lp += log_normal_density(t, prior.sigma);
    return static_cast<double>(n_obs) * ll + lp;
}

// Closed-form gradient: component j is N*(tbar_j - E[T_j]) - theta_j/sigma^2.
inline Eigen::VectorXd posterior_gradient(const Structure& structure, const std::vector<double>& theta,
                                          const std::vector<double>& stats, std::uint64_t n_obs,
                                          const PriorSpec& prior, int enum_limit = kDefaultEnumLimit) {
    detail::check_stats(structure, stats);
    const std::vector<double> p = config_distribution(structure, theta, enum_limit);
    const std::vector<double> sup = superset_sums(p, structure.k());
    const double inv_var = 1.0 / (prior.sigma * prior.sigma);
    const auto n = static_cast<double>(n_obs);
    Eigen::VectorXd g(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double moment = sup[structure.clusters()[j].mask];
        g[static_cast<Eigen::Index>(j)] = n * (stats[j] - moment) - theta[j] * inv_var;
    }
    return g;
}

// Closed-form Hessian: entry (i,j) is -N*(E[T_{i union j}] - E[T_i]E[T_j]),
// minus 1/sigma^2 on the diagonal. Computed once per unordered pair, so the
// matrix is symmetric by construction and negative-definite throughout.
inline Eigen::MatrixXd posterior_hessian(const Structure& structure, const std::vector<double>& theta,
                                         const std::vector<double>& stats, std::uint64_t n_obs,
                                         const PriorSpec& prior, int enum_limit = kDefaultEnumLimit) {
    detail::check_stats(structure, stats);
    const std::vector<double> p = config_distribution(structure, theta, enum_limit);
    const std::vector<double> sup = superset_sums(p, structure.k());
    const double inv_var = 1.0 / (prior.sigma * prior.sigma);
    const auto n = static_cast<double>(n_obs);
    const auto d = static_cast<Eigen::Index>(theta.size());
    Eigen::MatrixXd h(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const std::uint64_t mi = structure.clusters()[static_cast<std::size_t>(i)].mask;
        const double ei = sup[mi];
        for (Eigen::Index j = i; j < d; ++j) {
            const std::uint64_t mj = structure.clusters()[static_cast<std::size_t>(j)].mask;
            double v = -n * (sup[mi | mj] - ei * sup[mj]);
            if (i == j) v -= inv_var;
            h(i, j) = v;
            h(j, i) = v;
        }
    }
    return h;
}

// Laplace approximation to the log marginal likelihood of the data under the
// structure, evaluated at a converged fit:
//   d/2 * log(2*pi) + 1/2 * log det(covariance) + log L(theta_map) + log g(theta_map).
inline double laplace_log_marginal(const StructureFit& fit, const ConfigCounts& data, const PriorSpec& prior,
                                   int enum_limit = kDefaultEnumLimit) {
    if (!fit.converged) throw FitError("laplace_log_marginal requires a converged fit", fit.structure.hash());
    const std::vector<double> stats = sufficient_stats(data, fit.structure);
    const auto d = static_cast<Eigen::Index>(fit.structure.size());
    static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);

    double half_logdet = 0.0;
    if (d > 0) {
        if (fit.covariance.rows() != d || fit.covariance.cols() != d)
            throw FitError("covariance dimension does not match the structure", fit.structure.hash());
        Eigen::LLT<Eigen::MatrixXd> llt(fit.covariance);
        if (llt.info() != Eigen::Success)
            throw FitError("covariance is not positive-definite", fit.structure.hash());
        for (Eigen::Index i = 0; i < d; ++i) half_logdet += std::log(llt.matrixL()(i, i));
    }

    double ll = theta_empty(fit.structure, fit.theta_map, enum_limit);
    for (std::size_t j = 0; j < fit.theta_map.size(); ++j) ll += fit.theta_map[j] * stats[j];
    ll *= static_cast<double>(data.total());

    double lp = 0.0;
    for (double t : fit.theta_map) lp += log_normal_density(t, prior.sigma);

    return 0.5 * static_cast<double>(d) * kLog2Pi + half_logdet + ll + lp;
}

// Newton ascent of the log joint from theta = 0 (the prior mode and the
// uniform model). Steps solve (-H) d = g via Cholesky; a step-halving line
// search keeps the objective strictly increasing. Exits when the gradient
// sup-norm drops to tol. The covariance is the inverse negated Hessian at
// the exit point.
inline StructureFit newton_map(const Structure& structure, const ConfigCounts& data, const PriorSpec& prior,
                               const FitOptions& opts = {}) {
    prior.validate();
    if (!(opts.tol > 0.0)) throw InvalidArgumentError("tolerance must be > 0");
    check_enum_limit(structure.k(), opts.enum_limit);
    const std::vector<double> stats = sufficient_stats(data, structure);
    const std::uint64_t n_obs = data.total();

    StructureFit fit;
    fit.structure = structure;
    fit.theta_map.assign(structure.size(), 0.0);

    const auto d = static_cast<Eigen::Index>(structure.size());
    double objective = log_unnormalized_posterior(structure, fit.theta_map, stats, n_obs, prior, opts.enum_limit);
    fit.objective_trace.push_back(objective);

    Eigen::MatrixXd neg_hessian(d, d);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const Eigen::VectorXd grad = posterior_gradient(structure, fit.theta_map, stats, n_obs, prior, opts.enum_limit);
        fit.gradient_norm = d == 0 ? 0.0 : grad.lpNorm<Eigen::Infinity>();
        if (fit.gradient_norm <= opts.tol) {
            fit.converged = true;
            break;
        }
        neg_hessian = -posterior_hessian(structure, fit.theta_map, stats, n_obs, prior, opts.enum_limit);
        Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
        if (llt.info() != Eigen::Success)
            throw FitError("Hessian solve failed: matrix numerically singular", structure.hash());
        const Eigen::VectorXd step = llt.solve(grad);

        // Quadratic-model improvement of the full step. Once this drops below
        // what the objective can resolve in floating point, the line search
        // cannot measure progress; take the pure Newton step, which is in its
        // quadratic convergence regime.
        const double predicted = 0.5 * grad.dot(step);
        if (predicted <= 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(objective) + 1.0)) {
            for (std::size_t j = 0; j < fit.theta_map.size(); ++j)
                fit.theta_map[j] += step[static_cast<Eigen::Index>(j)];
            ++fit.iterations;
            continue;
        }

        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> candidate(fit.theta_map.size());
        for (int halving = 0; halving < 30; ++halving) {
            for (std::size_t j = 0; j < candidate.size(); ++j)
                candidate[j] = fit.theta_map[j] + alpha * step[static_cast<Eigen::Index>(j)];
            const double cand_obj =
                log_unnormalized_posterior(structure, candidate, stats, n_obs, prior, opts.enum_limit);
            if (cand_obj > objective) {
                fit.theta_map = candidate;
                objective = cand_obj;
                fit.objective_trace.push_back(objective);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++fit.iterations;
        if (!accepted) break;  // no ascent step representable; gradient norm decides convergence
    }
    if (!fit.converged) {
        const Eigen::VectorXd grad = posterior_gradient(structure, fit.theta_map, stats, n_obs, prior, opts.enum_limit);
        fit.gradient_norm = d == 0 ? 0.0 : grad.lpNorm<Eigen::Infinity>();
        fit.converged = fit.gradient_norm <= opts.tol;
    }

    neg_hessian = -posterior_hessian(structure, fit.theta_map, stats, n_obs, prior, opts.enum_limit);
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
    if (d > 0 && llt.info() != Eigen::Success)
        throw FitError("Hessian not positive-definite at exit", structure.hash());
    fit.covariance = llt.solve(Eigen::MatrixXd::Identity(d, d));
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();

    if (fit.converged) fit.log_marginal = laplace_log_marginal(fit, data, prior, opts.enum_limit);
    return fit;
}

}  // namespace loglin
