#pragma once

#include <Eigen/Dense>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "loglin/errors.hpp"
#include "loglin/search.hpp"
#include "loglin/summaries.hpp"
#include "loglin/types.hpp"

namespace loglin {

// File surfaces shared by the CLI: the per-iteration trace dump and the
// structure cache dump (which is self-contained enough to re-render reports
// with a different threshold or top-K later).

// "4,6" (1-based labels) -> cluster; optional surrounding braces accepted.
inline Cluster parse_cluster_label(const std::string& text, int k) {
    std::string s = text;
    if (s.size() >= 2 && s.front() == '{' && s.back() == '}') s = s.substr(1, s.size() - 2);
    std::vector<int> nodes;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto label = detail::parse_u64(tok);
        if (label < 1 || label > static_cast<std::uint64_t>(k))
            throw InvalidArgumentError("node label " + tok + " outside [1," + std::to_string(k) + "]");
        nodes.push_back(static_cast<int>(label) - 1);
    }
    if (nodes.empty()) throw InvalidArgumentError("empty cluster in '" + text + "'");
    return Cluster::from_nodes(nodes);
}

// Semicolon-separated cluster list, e.g. "1;2;3;4,6".
inline Structure parse_structure(const std::string& text, int k) {
    std::vector<Cluster> clusters;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ';'))
        if (!tok.empty()) clusters.push_back(parse_cluster_label(tok, k));
    return Structure(k, clusters);
}

inline std::string format_cluster_list(const Structure& s) {
    std::string out;
    for (std::size_t i = 0; i < s.clusters().size(); ++i) {
        if (i) out += ';';
        out += s.clusters()[i].label_1based();
    }
    return out;
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string join_g17(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += fmt_g17(v[i]);
    }
    return out;
}

inline std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ';')) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') throw InvalidArgumentError("bad numeric field '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

inline std::string fmt_hash(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

// Splits one CSV line honoring double-quoted fields (no embedded quotes).
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i <= line.size()) {
        std::string field;
        if (i < line.size() && line[i] == '"') {
            const auto endq = line.find('"', i + 1);
            if (endq == std::string::npos) throw ParseError("unterminated quoted field", lineno);
            field = line.substr(i + 1, endq - i - 1);
            i = endq + 1;
            if (i < line.size() && line[i] != ',') throw ParseError("expected comma after quoted field", lineno);
        } else {
            const auto comma = line.find(',', i);
            field = line.substr(i, comma == std::string::npos ? std::string::npos : comma - i);
            i = comma == std::string::npos ? line.size() : comma;
        }
        out.push_back(std::move(field));
        if (i >= line.size()) break;
        ++i;  // skip comma
    }
    return out;
}

}  // namespace detail

// Newline-delimited diagnostics: one record per chain iteration.
inline void write_trace_dump(std::ostream& os, const ChainTrace& trace) {
    os << "iteration,structure_hash,accepted,score\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const TraceRecord& r = trace.records[i];
        os << i << ',' << detail::fmt_hash(r.structure_hash) << ',' << (r.accepted ? 1 : 0) << ','
           << detail::fmt_g17(r.score) << '\n';
    }
}

inline const char* kCacheDumpHeader =
    "hash,clusters,log_prior,log_marginal,converged,visits,post_visits,theta,cov_diag";

// One record per cached structure, ordered by hash. post_visits counts only
// post-burn-in iterations, which is what visit-frequency estimates use.
inline void write_cache_dump(std::ostream& os, const ChainTrace& trace) {
    const detail::PostVisits pv = detail::post_visits(trace);
    os << "# loglin-cache k=" << trace.k << " iterations=" << trace.iterations << " burn_in=" << trace.burn_in
       << '\n';
    os << kCacheDumpHeader << '\n';
    std::vector<std::uint64_t> hashes;
    hashes.reserve(trace.cache.size());
    for (const auto& [h, e] : trace.cache) hashes.push_back(h);
    std::sort(hashes.begin(), hashes.end());
    for (std::uint64_t h : hashes) {
        const CacheEntry& e = trace.cache.at(h);
        std::vector<double> cov_diag(e.structure.size());
        for (std::size_t i = 0; i < cov_diag.size(); ++i)
            cov_diag[i] = e.fit.converged ? e.fit.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))
                                          : 0.0;
        const auto pv_it = pv.by_hash.find(h);
        os << detail::fmt_hash(h) << ',' << '"' << format_cluster_list(e.structure) << '"' << ','
           << detail::fmt_g17(e.log_prior) << ',' << detail::fmt_g17(e.fit.log_marginal) << ','
           << (e.fit.converged ? 1 : 0) << ',' << e.visits << ','
           << (pv_it == pv.by_hash.end() ? 0 : pv_it->second) << ',' << '"'
           << detail::join_g17(e.fit.theta_map) << '"' << ',' << '"' << detail::join_g17(cov_diag) << '"' << '\n';
    }
}

struct CacheDump {
    int k = 0;
    std::uint64_t iterations = 0;
    std::uint64_t burn_in = 0;
    StructureCache cache;
    detail::PostVisits visits;
};

// Rebuilds enough state to re-render reports. Covariances are restored as
// diagonal matrices (the dump stores only the diagonal), which is all the
// report computations use.
inline CacheDump read_cache_dump(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty cache dump", 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    CacheDump dump;
    if (std::sscanf(line.c_str(), "# loglin-cache k=%d iterations=%" SCNu64 " burn_in=%" SCNu64, &dump.k,
                    &dump.iterations, &dump.burn_in) != 3)
        throw ParseError("expected '# loglin-cache k=... iterations=... burn_in=...'", lineno);
    if (!std::getline(in, line)) throw ParseError("missing cache dump header row", lineno + 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCacheDumpHeader) throw ParseError("unexpected cache dump columns", lineno);

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::split_csv_line(line, lineno);
        if (f.size() != 9) throw ParseError("expected 9 fields, got " + std::to_string(f.size()), lineno);
        try {
            CacheEntry e;
            const std::uint64_t hash = std::stoull(f[0], nullptr, 16);
            e.structure = f[1].empty() ? Structure(dump.k) : parse_structure(f[1], dump.k);
            e.log_prior = detail::split_doubles(f[2]).at(0);
            e.fit.structure = e.structure;
            e.fit.log_marginal = detail::split_doubles(f[3]).at(0);
            e.fit.converged = f[4] == "1";
            e.visits = detail::parse_u64(f[5]);
            const std::uint64_t post = detail::parse_u64(f[6]);
            e.fit.theta_map = detail::split_doubles(f[7]);
            const std::vector<double> cov_diag = detail::split_doubles(f[8]);
            if (e.fit.theta_map.size() != e.structure.size() || cov_diag.size() != e.structure.size())
                throw InvalidArgumentError("theta/cov_diag length does not match the cluster list");
            const auto d = static_cast<Eigen::Index>(cov_diag.size());
            e.fit.covariance = Eigen::MatrixXd::Zero(d, d);
            for (Eigen::Index i = 0; i < d; ++i) e.fit.covariance(i, i) = cov_diag[static_cast<std::size_t>(i)];
            if (e.structure.hash() != hash) throw InvalidArgumentError("hash does not match the cluster list");
            if (post > 0) {
                dump.visits.by_hash[hash] = post;
                dump.visits.total += post;
            }
            dump.cache.emplace(hash, std::move(e));
        } catch (const InvalidArgumentError& err) {
            throw ParseError(err.what(), lineno);
        }
    }
    return dump;
}

}  // namespace loglin
