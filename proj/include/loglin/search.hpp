#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/inference.hpp"
#include "loglin/prior.hpp"
#include "loglin/random.hpp"
#include "loglin/types.hpp"

namespace loglin {

// Metropolis-Hastings random walk over structures. Each move toggles one
// candidate cluster; the equilibrium distribution is the Laplace-approximated
// structure posterior. Every structure ever fitted is cached by its stable
// hash, so revisits cost one lookup.

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Log prior probability of a structure under independent cluster inclusion:
// singletons are present with probability q_single, every other candidate
// cluster of order <= max_order with probability q_high.
inline double structure_log_prior(const Structure& structure, const PriorSpec& prior, int max_order) {
    prior.validate();
    if (max_order < 1 || max_order > structure.k())
        throw InvalidArgumentError("max_order must be in [1,k]");
    if (structure.max_cluster_order() > max_order)
        throw InvalidArgumentError("structure contains a cluster larger than max_order=" + std::to_string(max_order));

    const int k = structure.k();
    int singles_present = 0;
    for (Cluster c : structure.clusters())
        if (c.order() == 1) ++singles_present;
    const auto higher_present = static_cast<double>(structure.size()) - singles_present;

    // Number of candidate clusters with 2 <= order <= max_order, in double
    // arithmetic (exact up to k's binomials dwarfing 2^53 only at k > 53).
    double higher_total = 0.0;
    double binom = static_cast<double>(k);  // C(k,1)
    for (int r = 2; r <= max_order; ++r) {
        binom *= static_cast<double>(k - r + 1) / static_cast<double>(r);
        higher_total += binom;
    }

    return singles_present * std::log(prior.q_single) + (k - singles_present) * std::log(1.0 - prior.q_single) +
           higher_present * std::log(prior.q_high) + (higher_total - higher_present) * std::log(1.0 - prior.q_high);
}

// Candidate clusters with multiplicative weights. Selection probabilities
// mix the normalized weights with a uniform floor so every candidate keeps
// probability >= floor and the chain stays irreducible.
class ProposalTable {
   public:
    ProposalTable() = default;
    ProposalTable(std::vector<Cluster> candidates, double floor_mass = 0.01)
        : candidates_(std::move(candidates)), weights_(candidates_.size(), 1.0) {
        if (!candidates_.empty()) {
            floor_ = floor_mass / static_cast<double>(candidates_.size());
            if (!(floor_mass >= 0.0 && floor_mass < 1.0))
                throw InvalidArgumentError("proposal floor mass must be in [0,1)");
        }
    }

    // All nonempty clusters with order in [singleton_moves ? 1 : 2, max_order].
    static ProposalTable all_candidates(int k, int max_order, bool singleton_moves, double floor_mass = 0.01) {
        if (k > kDefaultEnumLimit)
            throw CapacityError("candidate enumeration needs 2^" + std::to_string(k) + " masks");
        const int min_order = singleton_moves ? 1 : 2;
        std::vector<Cluster> cs;
        const std::uint64_t n = std::uint64_t{1} << k;
        for (std::uint64_t m = 1; m < n; ++m) {
            const int r = std::popcount(m);
            if (r >= min_order && r <= max_order) cs.emplace_back(m);
        }
        std::sort(cs.begin(), cs.end(), cluster_less);
        return ProposalTable(std::move(cs), floor_mass);
    }

    const std::vector<Cluster>& candidates() const { return candidates_; }
    const std::vector<double>& weights() const { return weights_; }
    double floor() const { return floor_; }

    void set_weights(std::vector<double> w) {
        if (w.size() != candidates_.size()) throw InvalidArgumentError("weight vector size mismatch");
        for (double v : w)
            if (!(v > 0.0)) throw InvalidArgumentError("proposal weights must be strictly positive");
        weights_ = std::move(w);
    }

    std::vector<double> selection_probs() const {
        const std::size_t n = candidates_.size();
        std::vector<double> p(n, 0.0);
        double total = 0.0;
        for (double w : weights_) total += w;
        const double mix = 1.0 - floor_ * static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = mix * weights_[i] / total + floor_;
        return p;
    }

    // Multiplicative update: boost the toggled cluster's weight when the move
    // was accepted, shrink it when rejected; weights are rescaled to mean 1.
    void adapt(Cluster toggled, bool accepted) {
        for (std::size_t i = 0; i < candidates_.size(); ++i) {
            if (candidates_[i] == toggled) {
                weights_[i] *= accepted ? 1.1 : 0.95;
                break;
            }
        }
        double total = 0.0;
        for (double w : weights_) total += w;
        const double scale = static_cast<double>(weights_.size()) / total;
        for (double& w : weights_) w *= scale;
    }

   private:
    std::vector<Cluster> candidates_;
    std::vector<double> weights_;
    double floor_ = 0.0;
};

inline ProposalTable adapt_proposal(ProposalTable table, Cluster toggled, bool accepted) {
    table.adapt(toggled, accepted);
    return table;
}

struct Proposal {
    Structure proposed;
    Cluster cluster;
    double log_fwd = 0.0;  // log rho(cluster | current)
    double log_rev = 0.0;  // log rho(cluster | proposed)
};

// Draw one candidate cluster and toggle it. The table is state-independent,
// so the forward and reverse selection probabilities coincide; both are
// returned so the acceptance ratio stays correct for any table.
inline Proposal propose(const Structure& current, const ProposalTable& table, std::mt19937_64& rng) {
    const std::vector<double> probs = table.selection_probs();
    if (probs.empty()) throw InvalidArgumentError("proposal candidate set is empty");
    const double u = uniform_double(rng);
    double cdf = 0.0;
    std::size_t idx = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cdf += probs[i];
        if (u < cdf) {
            idx = i;
            break;
        }
    }
    Proposal out;
    out.cluster = table.candidates()[idx];
    out.proposed = current.with_toggled(out.cluster);
    out.log_fwd = std::log(probs[idx]);
    out.log_rev = out.log_fwd;
    return out;
}

// Hastings log acceptance probability, always <= 0. Scores are
// log marginal + log structure prior; a score of -inf (failed fit) is never
// accepted, and any finite proposal beats a -inf current state.
inline double acceptance_log_prob(double current_score, double proposed_score, double log_fwd, double log_rev) {
    if (proposed_score == kNegInf) return kNegInf;
    if (current_score == kNegInf) return 0.0;
    return std::min(0.0, (proposed_score + log_rev) - (current_score + log_fwd));
}

struct SearchConfig {
    std::uint64_t iterations = 15000;
    std::uint64_t burn_in = 1500;
    int max_order = 0;  // 0 means "use k"
    std::size_t top_k = 100;
    std::uint64_t seed = 0;
    bool singleton_moves = false;
    bool adapt_proposals = true;
    FitOptions fit;

    void validate() const {
        if (burn_in >= iterations) throw InvalidArgumentError("burn_in must be < iterations");
        if (top_k < 1) throw InvalidArgumentError("top_k must be >= 1");
    }
};

struct TraceRecord {
    std::uint64_t structure_hash;
    bool accepted;
    double score;
};

struct CacheEntry {
    Structure structure;
    StructureFit fit;
    double log_prior = kNegInf;
    std::uint64_t visits = 0;

    // Total score driving the walk; -inf for structures whose fit failed.
    double score() const { return fit.converged ? fit.log_marginal + log_prior : kNegInf; }
};

struct ChainTrace {
    int k = 0;
    std::uint64_t iterations = 0;
    std::uint64_t burn_in = 0;
    std::vector<TraceRecord> records;
    std::unordered_map<std::uint64_t, CacheEntry> cache;
    std::vector<Cluster> proposal_candidates;
    std::vector<double> proposal_weights_at_freeze;
    std::vector<double> proposal_weights_final;

    const CacheEntry& entry(std::uint64_t hash) const {
        auto it = cache.find(hash);
        if (it == cache.end()) throw InvalidArgumentError("trace hash missing from cache");
        return it->second;
    }
};

// One MC3 chain with an explicit proposal table (tests use this to pin
// asymmetric or frozen tables). The chain starts at the singletons-only
// structure; the table adapts only during burn-in and is frozen afterwards.
inline ChainTrace mc3_run(const ConfigCounts& data, const SearchConfig& cfg, const PriorSpec& prior,
                          ProposalTable table) {
    cfg.validate();
    prior.validate();
    if (data.total() == 0) throw EmptyDataError("no observations");
    check_enum_limit(data.k(), cfg.fit.enum_limit);
    const int k = data.k();
    const int max_order = cfg.max_order == 0 ? k : cfg.max_order;
    if (max_order < 1 || max_order > k) throw InvalidArgumentError("max_order must be in [1,k]");
    if (table.candidates().empty()) throw InvalidArgumentError("proposal candidate set is empty");

    ChainTrace trace;
    trace.k = k;
    trace.iterations = cfg.iterations;
    trace.burn_in = cfg.burn_in;
    trace.records.reserve(cfg.iterations);
    trace.proposal_candidates = table.candidates();

    auto ensure_entry = [&](const Structure& s) -> CacheEntry& {
        const std::uint64_t h = s.hash();
        auto it = trace.cache.find(h);
        if (it != trace.cache.end()) {
            if (!(it->second.structure == s)) throw Error("structure hash collision");
            return it->second;
        }
        CacheEntry e;
        e.structure = s;
        e.log_prior = structure_log_prior(s, prior, max_order);
        try {
            e.fit = newton_map(s, data, prior, cfg.fit);
        } catch (const FitError&) {
            // Unscorable structure: keep a full-size zero placeholder so the
            // entry still serializes; score() stays -inf.
            e.fit = StructureFit{};
            e.fit.structure = s;
            e.fit.theta_map.assign(s.size(), 0.0);
            e.fit.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()),
                                                     static_cast<Eigen::Index>(s.size()));
        }
        return trace.cache.emplace(h, std::move(e)).first->second;
    };

    std::mt19937_64 rng(cfg.seed);
    Structure current = Structure::singletons_only(k);
    double current_score = ensure_entry(current).score();

    if (cfg.burn_in == 0) trace.proposal_weights_at_freeze = table.weights();
    for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
        const Proposal prop = propose(current, table, rng);
        const double proposed_score = ensure_entry(prop.proposed).score();
        const double log_alpha = acceptance_log_prob(current_score, proposed_score, prop.log_fwd, prop.log_rev);
        const double u = uniform_double(rng);
        const bool accepted = std::log(u) < log_alpha;
        if (accepted) {
            current = prop.proposed;
            current_score = proposed_score;
        }
        if (it < cfg.burn_in && cfg.adapt_proposals) table.adapt(prop.cluster, accepted);
        if (it + 1 == cfg.burn_in) trace.proposal_weights_at_freeze = table.weights();

        auto& entry = trace.cache.at(current.hash());
        ++entry.visits;
        trace.records.push_back(TraceRecord{current.hash(), accepted, entry.score()});
    }
    trace.proposal_weights_final = table.weights();
    return trace;
}

inline ChainTrace mc3_run(const ConfigCounts& data, const SearchConfig& cfg, const PriorSpec& prior) {
    const int max_order = cfg.max_order == 0 ? data.k() : cfg.max_order;
    return mc3_run(data, cfg, prior, ProposalTable::all_candidates(data.k(), max_order, cfg.singleton_moves));
}

}  // namespace loglin
