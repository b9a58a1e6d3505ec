#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "loglin/errors.hpp"
#include "loglin/search.hpp"
#include "loglin/types.hpp"

namespace loglin {

// Post-processing of a chain: per-cluster inclusion probabilities (visit
// frequencies and top-K renormalization), model-averaged and conditional
// parameter estimates, and the within/between variance decomposition.

using StructureCache = std::unordered_map<std::uint64_t, CacheEntry>;

struct ClusterReport {
    Cluster cluster;
    double p_freq = 0.0;    // fraction of post-burn-in iterations containing the cluster
    double p_topk = 0.0;    // renormalized mass of top-K structures containing it
    double theta_avg = 0.0; // weighted average with 0 for structures lacking the cluster
    double theta_cond = std::numeric_limits<double>::quiet_NaN();  // theta_avg / p_topk
    double sd_cond = std::numeric_limits<double>::quiet_NaN();     // within+between sd given inclusion
};

// The K best-scoring cached structures (failed fits excluded) with weights
// proportional to exp(score), normalized over exactly those K. Ties in score
// break by structure hash so output is deterministic.
struct TopKSelection {
    std::vector<const CacheEntry*> entries;
    std::vector<double> weights;
};

inline TopKSelection top_k_selection(const StructureCache& cache, std::size_t k_best) {
    if (k_best < 1) throw InvalidArgumentError("top_k must be >= 1");
    TopKSelection sel;
    for (const auto& [h, e] : cache)
        if (e.score() != kNegInf) sel.entries.push_back(&e);
    std::sort(sel.entries.begin(), sel.entries.end(), [](const CacheEntry* a, const CacheEntry* b) {
        if (a->score() != b->score()) return a->score() > b->score();
        return a->structure.hash() < b->structure.hash();
    });
    if (sel.entries.size() > k_best) sel.entries.resize(k_best);
    if (sel.entries.empty()) return sel;
    const double best = sel.entries.front()->score();
    double total = 0.0;
    sel.weights.reserve(sel.entries.size());
    for (const CacheEntry* e : sel.entries) {
        const double w = std::exp(e->score() - best);
        sel.weights.push_back(w);
        total += w;
    }
    for (double& w : sel.weights) w /= total;
    return sel;
}

// Fraction of post-burn-in iterations whose structure contains the cluster.
inline double inclusion_prob_frequency(const ChainTrace& trace, Cluster xi) {
    if (trace.records.size() <= trace.burn_in)
        throw InvalidArgumentError("trace has no post-burn-in records");
    std::uint64_t hits = 0;
    std::unordered_map<std::uint64_t, bool> contains;
    for (std::size_t i = trace.burn_in; i < trace.records.size(); ++i) {
        const std::uint64_t h = trace.records[i].structure_hash;
        auto it = contains.find(h);
        if (it == contains.end()) it = contains.emplace(h, trace.entry(h).structure.contains(xi)).first;
        if (it->second) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(trace.records.size() - trace.burn_in);
}

inline double inclusion_prob_topk(const StructureCache& cache, std::size_t k_best, Cluster xi) {
    const TopKSelection sel = top_k_selection(cache, k_best);
    double p = 0.0;
    for (std::size_t i = 0; i < sel.entries.size(); ++i)
        if (sel.entries[i]->structure.contains(xi)) p += sel.weights[i];
    return p;
}

// Weighted average of MAP estimates over the top-K structures, with value 0
// contributed by structures that do not contain the cluster.
inline double model_averaged_theta(const StructureCache& cache, std::size_t k_best, Cluster xi) {
    const TopKSelection sel = top_k_selection(cache, k_best);
    double avg = 0.0;
    for (std::size_t i = 0; i < sel.entries.size(); ++i) {
        const int idx = sel.entries[i]->structure.index_of(xi);
        if (idx >= 0) avg += sel.weights[i] * sel.entries[i]->fit.theta_map[static_cast<std::size_t>(idx)];
    }
    return avg;
}

// Estimate of theta given that the cluster is included.
inline double conditional_theta(const StructureCache& cache, std::size_t k_best, Cluster xi) {
    const double p = inclusion_prob_topk(cache, k_best, xi);
    if (p <= 0.0)
        throw UndefinedEstimateError("cluster " + xi.label_1based() + " appears in no top-K structure");
    return model_averaged_theta(cache, k_best, xi) / p;
}

// Variance of theta given inclusion: over the top-K structures containing
// the cluster (weights renormalized to them), the average within-structure
// posterior variance plus the spread of the structure-specific estimates
// around their weighted mean.
inline double conditional_variance(const StructureCache& cache, std::size_t k_best, Cluster xi) {
    const TopKSelection sel = top_k_selection(cache, k_best);
    double mass = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < sel.entries.size(); ++i) {
        const int idx = sel.entries[i]->structure.index_of(xi);
        if (idx < 0) continue;
        mass += sel.weights[i];
        mean += sel.weights[i] * sel.entries[i]->fit.theta_map[static_cast<std::size_t>(idx)];
    }
    if (mass <= 0.0)
        throw UndefinedEstimateError("cluster " + xi.label_1based() + " appears in no top-K structure");
    mean /= mass;
    double var = 0.0;
    for (std::size_t i = 0; i < sel.entries.size(); ++i) {
        const int idx = sel.entries[i]->structure.index_of(xi);
        if (idx < 0) continue;
        const auto j = static_cast<Eigen::Index>(idx);
        const double theta = sel.entries[i]->fit.theta_map[static_cast<std::size_t>(idx)];
        const double within = sel.entries[i]->fit.covariance(j, j);
        var += (sel.weights[i] / mass) * (within + (theta - mean) * (theta - mean));
    }
    return var;
}

// Weighted average of the structure covariances over the top-K structures,
// embedded into the union of their clusters; absent clusters contribute zero
// rows and columns. Returns the union (canonically ordered) and the matrix.
inline std::pair<std::vector<Cluster>, Eigen::MatrixXd> averaged_covariance(const StructureCache& cache,
                                                                            std::size_t k_best) {
    const TopKSelection sel = top_k_selection(cache, k_best);
    std::vector<Cluster> all;
    for (const CacheEntry* e : sel.entries)
        for (Cluster c : e->structure.clusters()) all.push_back(c);
    std::sort(all.begin(), all.end(), cluster_less);
    all.erase(std::unique(all.begin(), all.end()), all.end());

    const auto d = static_cast<Eigen::Index>(all.size());
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < sel.entries.size(); ++i) {
        const CacheEntry* e = sel.entries[i];
        const auto& cs = e->structure.clusters();
        std::vector<Eigen::Index> where(cs.size());
        for (std::size_t a = 0; a < cs.size(); ++a) {
            auto it = std::lower_bound(all.begin(), all.end(), cs[a], cluster_less);
            where[a] = static_cast<Eigen::Index>(it - all.begin());
        }
        for (std::size_t a = 0; a < cs.size(); ++a)
            for (std::size_t b = 0; b < cs.size(); ++b)
                avg(where[a], where[b]) +=
                    sel.weights[i] * e->fit.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    return {std::move(all), std::move(avg)};
}

namespace detail {

// Post-burn-in visit counts per structure hash plus the total.
struct PostVisits {
    std::unordered_map<std::uint64_t, std::uint64_t> by_hash;
    std::uint64_t total = 0;
};

inline PostVisits post_visits(const ChainTrace& trace) {
    PostVisits pv;
    for (std::size_t i = trace.burn_in; i < trace.records.size(); ++i) ++pv.by_hash[trace.records[i].structure_hash];
    pv.total = trace.records.size() > trace.burn_in ? trace.records.size() - trace.burn_in : 0;
    return pv;
}

}  // namespace detail

// Reports for every cluster appearing in a post-burn-in visited structure or
// in a top-K structure.
inline std::vector<ClusterReport> build_cluster_reports(const StructureCache& cache,
                                                        const detail::PostVisits& visits, std::size_t k_best) {
    const TopKSelection sel = top_k_selection(cache, k_best);

    std::vector<Cluster> universe;
    for (const auto& [h, n] : visits.by_hash) {
        if (n == 0) continue;
        auto it = cache.find(h);
        if (it == cache.end()) throw InvalidArgumentError("visit hash missing from cache");
        for (Cluster c : it->second.structure.clusters()) universe.push_back(c);
    }
    for (const CacheEntry* e : sel.entries)
        for (Cluster c : e->structure.clusters()) universe.push_back(c);
    std::sort(universe.begin(), universe.end(), cluster_less);
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

    std::vector<ClusterReport> out;
    out.reserve(universe.size());
    for (Cluster xi : universe) {
        ClusterReport r;
        r.cluster = xi;
        if (visits.total > 0) {
            std::uint64_t hits = 0;
            for (const auto& [h, n] : visits.by_hash)
                if (n > 0 && cache.at(h).structure.contains(xi)) hits += n;
            r.p_freq = static_cast<double>(hits) / static_cast<double>(visits.total);
        }
        double mass = 0.0;
        double avg = 0.0;
        for (std::size_t i = 0; i < sel.entries.size(); ++i) {
            const int idx = sel.entries[i]->structure.index_of(xi);
            if (idx < 0) continue;
            mass += sel.weights[i];
            avg += sel.weights[i] * sel.entries[i]->fit.theta_map[static_cast<std::size_t>(idx)];
        }
        r.p_topk = mass;
        r.theta_avg = avg;
        if (mass > 0.0) {
            r.theta_cond = avg / mass;
            r.sd_cond = std::sqrt(conditional_variance(cache, k_best, xi));
        }
        out.push_back(r);
    }
    return out;
}

inline std::vector<ClusterReport> build_cluster_reports(const ChainTrace& trace, std::size_t k_best) {
    return build_cluster_reports(trace.cache, detail::post_visits(trace), k_best);
}

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace detail

// Rows with max(p_freq, p_topk) >= threshold, singletons first (in label
// order) and then by descending visit frequency.
inline std::vector<ClusterReport> filter_and_sort_reports(std::vector<ClusterReport> reports, double threshold) {
    std::erase_if(reports, [&](const ClusterReport& r) { return std::max(r.p_freq, r.p_topk) < threshold; });
    std::sort(reports.begin(), reports.end(), [](const ClusterReport& a, const ClusterReport& b) {
        const bool sa = a.cluster.order() == 1;
        const bool sb = b.cluster.order() == 1;
        if (sa != sb) return sa;
        if (sa) return a.cluster.mask < b.cluster.mask;
        if (a.p_freq != b.p_freq) return a.p_freq > b.p_freq;
        return cluster_less(a.cluster, b.cluster);
    });
    return reports;
}

inline std::string render_report_text(const std::vector<ClusterReport>& reports, double threshold) {
    const std::vector<ClusterReport> rows = filter_and_sort_reports(reports, threshold);
    std::size_t w = 7;  // width of the cluster column
    for (const ClusterReport& r : rows) w = std::max(w, r.cluster.label_1based().size());
    std::string out;
    auto pad = [&](std::string s, std::size_t width) {
        if (s.size() < width) s.append(width - s.size(), ' ');
        return s;
    };
    out += pad("cluster", w) + "  p_freq  p_topk  theta_cond  sd_cond\n";
    for (const ClusterReport& r : rows) {
        out += pad(r.cluster.label_1based(), w);
        out += "  " + detail::fmt("%6.2f", r.p_freq);
        out += "  " + detail::fmt("%6.2f", r.p_topk);
        out += "  " + detail::fmt("%10.2f", r.theta_cond);
        out += "  " + detail::fmt("%7.2f", r.sd_cond);
        out += '\n';
    }
    return out;
}

inline void write_report_csv(std::ostream& os, const std::vector<ClusterReport>& reports, double threshold) {
    os << "cluster,p_freq,p_topk,theta_cond,sd_cond\n";
    for (const ClusterReport& r : filter_and_sort_reports(reports, threshold)) {
        os << '"' << r.cluster.label_1based() << '"' << ',' << detail::fmt("%.10g", r.p_freq) << ','
           << detail::fmt("%.10g", r.p_topk) << ',' << detail::fmt("%.10g", r.theta_cond) << ','
           << detail::fmt("%.10g", r.sd_cond) << '\n';
    }
}

// A parsed report row; the cluster is kept as its rendered label so reports
// of different node counts can still be joined.
struct ReportRow {
    std::string cluster_label;
    double p_freq = 0.0;
    double p_topk = 0.0;
    double theta_cond = 0.0;
    double sd_cond = 0.0;
};

inline std::vector<ReportRow> read_report_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty report file", 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "cluster,p_freq,p_topk,theta_cond,sd_cond")
        throw ParseError("expected header 'cluster,p_freq,p_topk,theta_cond,sd_cond'", lineno);
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.size() < 2 || line[0] != '"') throw ParseError("cluster field must be quoted", lineno);
        const auto endq = line.find('"', 1);
        if (endq == std::string::npos || endq + 1 >= line.size() || line[endq + 1] != ',')
            throw ParseError("malformed cluster field", lineno);
        ReportRow r;
        r.cluster_label = line.substr(1, endq - 1);
        const std::string rest = line.substr(endq + 2);
        if (std::sscanf(rest.c_str(), "%lf,%lf,%lf,%lf", &r.p_freq, &r.p_topk, &r.theta_cond, &r.sd_cond) != 4)
            throw ParseError("expected four numeric fields", lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace loglin
