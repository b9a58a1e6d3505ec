#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "loglin/errors.hpp"
#include "loglin/types.hpp"

namespace loglin {

namespace detail {

// Strict digits-only parser; std::stoull would accept a leading minus.
inline std::uint64_t parse_u64(const std::string& s) {
    if (s.empty()) throw InvalidArgumentError("expected a nonnegative integer, got an empty field");
    std::uint64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') throw InvalidArgumentError("expected a nonnegative integer, got '" + s + "'");
        const std::uint64_t digit = static_cast<std::uint64_t>(c - '0');
        if (v > (~std::uint64_t{0} - digit) / 10)
            throw InvalidArgumentError("integer out of range: '" + s + "'");
        v = v * 10 + digit;
    }
    return v;
}

}  // namespace detail

// Sparse multiset of observed configurations. The ordered map keys on the
// configuration bitmask, so iteration (and hence every derived statistic and
// the CSV writer) is independent of insertion order.
class ConfigCounts {
   public:
    ConfigCounts() = default;
    explicit ConfigCounts(int k) : k_(k) {
        if (k < 1 || k > 64) throw InvalidArgumentError("node count must be in [1,64]");
    }

    int k() const { return k_; }
    std::uint64_t total() const { return total_; }
    const std::map<std::uint64_t, std::uint64_t>& counts() const { return counts_; }

    void add(Config x, std::uint64_t n = 1) {
        if (k_ < 64 && (x.bits >> k_) != 0)
            throw InvalidArgumentError("configuration has more than k=" + std::to_string(k_) + " bits");
        if (n == 0) return;
        counts_[x.bits] += n;
        total_ += n;
    }

    friend bool operator==(const ConfigCounts& a, const ConfigCounts& b) {
        return a.k_ == b.k_ && a.total_ == b.total_ && a.counts_ == b.counts_;
    }

   private:
    int k_ = 1;
    std::uint64_t total_ = 0;
    std::map<std::uint64_t, std::uint64_t> counts_;
};

// Marginal frequency of each cluster of the structure: the fraction of
// observations in which all of the cluster's nodes are active. Integer
// accumulation, so the result is bit-exact regardless of how the counts map
// was built.
inline std::vector<double> sufficient_stats(const ConfigCounts& data, const Structure& structure) {
    if (data.k() != structure.k())
        throw InvalidArgumentError("data has k=" + std::to_string(data.k()) + " but structure has k=" +
                                   std::to_string(structure.k()));
    if (data.total() == 0) throw EmptyDataError("no observations");
    std::vector<double> stats(structure.size());
    for (std::size_t j = 0; j < structure.size(); ++j) {
        const std::uint64_t m = structure.clusters()[j].mask;
        std::uint64_t hits = 0;
        for (const auto& [bits, n] : data.counts())
            if ((bits & m) == m) hits += n;
        stats[j] = static_cast<double>(hits) / static_cast<double>(data.total());
    }
    return stats;
}

// CSV format: header "config,count"; config is a k-character 0/1 string with
// node 0 leftmost; duplicate config rows are summed on load.
inline ConfigCounts read_config_counts(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty configuration-count file", 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "config,count") throw ParseError("expected header 'config,count'", lineno);

    int k = -1;
    ConfigCounts out;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("expected 'config,count'", lineno);
        const std::string cfg = line.substr(0, comma);
        const std::string cnt = line.substr(comma + 1);
        if (k == -1) {
            k = static_cast<int>(cfg.size());
            if (k < 1 || k > 64) throw ParseError("configuration width must be in [1,64]", lineno);
            out = ConfigCounts(k);
        } else if (static_cast<int>(cfg.size()) != k) {
            throw ParseError("configuration width changed from " + std::to_string(k), lineno);
        }
        try {
            out.add(config_from_string(cfg), detail::parse_u64(cnt));
        } catch (const InvalidArgumentError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (k == -1) throw EmptyDataError("configuration-count file has no rows");
    return out;
}

// Rows sorted by configuration bitmask.
inline void write_config_counts(std::ostream& out, const ConfigCounts& data) {
    out << "config,count\n";
    for (const auto& [bits, n] : data.counts())
        out << config_to_string(Config(bits), data.k()) << ',' << n << '\n';
}

}  // namespace loglin
