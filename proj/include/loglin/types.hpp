#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "loglin/errors.hpp"

namespace loglin {

// Node indices are 0-based internally; report output uses 1-based labels.
// Both clusters and configurations are 64-bit masks, so k <= 64 structurally.
// Dense enumeration over all 2^k configurations caps practical k much lower.
inline constexpr int kDefaultEnumLimit = 20;

// A set of nodes hypothesized to interact. Bit i set iff node i belongs.
struct Cluster {
    std::uint64_t mask = 0;

    Cluster() = default;
    explicit Cluster(std::uint64_t m) : mask(m) {}

    static Cluster from_nodes(std::initializer_list<int> nodes) {
        return from_nodes(std::vector<int>(nodes));
    }
    static Cluster from_nodes(const std::vector<int>& nodes) {
        std::uint64_t m = 0;
        for (int i : nodes) {
            if (i < 0 || i >= 64) throw InvalidArgumentError("node index out of range: " + std::to_string(i));
            m |= std::uint64_t{1} << i;
        }
        return Cluster(m);
    }

    int order() const { return std::popcount(mask); }
    bool empty() const { return mask == 0; }
    bool contains_node(int i) const { return (mask >> i) & 1u; }

    std::vector<int> nodes() const {
        std::vector<int> out;
        for (int i = 0; i < 64; ++i)
            if (contains_node(i)) out.push_back(i);
        return out;
    }

    // Render as comma-joined 1-based labels in braces, e.g. "{4,6}".
    std::string label_1based() const {
        std::string s = "{";
        bool first = true;
        for (int i : nodes()) {
            if (!first) s += ',';
            s += std::to_string(i + 1);
            first = false;
        }
        s += '}';
        return s;
    }

    friend bool operator==(Cluster a, Cluster b) { return a.mask == b.mask; }
    friend bool operator!=(Cluster a, Cluster b) { return a.mask != b.mask; }
};

// Canonical cluster ordering: by (order, mask). Structures sorted this way
// serialize identically whenever they are equal as sets.
inline bool cluster_less(Cluster a, Cluster b) {
    if (a.order() != b.order()) return a.order() < b.order();
    return a.mask < b.mask;
}

// One observed state of all k nodes; bit i = state of node i.
struct Config {
    std::uint64_t bits = 0;

    Config() = default;
    explicit Config(std::uint64_t b) : bits(b) {}

    bool node_active(int i) const { return (bits >> i) & 1u; }

    friend bool operator==(Config a, Config b) { return a.bits == b.bits; }
};

// Indicator T: 1 iff every node of the cluster is active in x. The empty
// cluster's indicator is identically 1.
inline int cluster_indicator(Config x, Cluster xi) {
    return (x.bits & xi.mask) == xi.mask ? 1 : 0;
}

// Node-0-leftmost 0/1 string of length k.
inline std::string config_to_string(Config x, int k) {
    std::string s(static_cast<std::size_t>(k), '0');
    for (int i = 0; i < k; ++i)
        if (x.node_active(i)) s[static_cast<std::size_t>(i)] = '1';
    return s;
}

inline Config config_from_string(const std::string& s) {
    std::uint64_t bits = 0;
    if (s.size() > 64) throw InvalidArgumentError("configuration string longer than 64 bits");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1')
            bits |= std::uint64_t{1} << i;
        else if (s[i] != '0')
            throw InvalidArgumentError("configuration string must contain only 0/1");
    }
    return Config(bits);
}

// FNV-1a, used for all stable 64-bit hashes (structure identity in traces,
// cache dumps). Must not change across runs or platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// An interaction structure: node count plus a duplicate-free list of
// nonempty clusters in canonical (order, mask) order. The empty cluster is
// implicit and never stored.
class Structure {
   public:
    Structure() = default;
    explicit Structure(int k) : k_(check_k(k)) {}
    Structure(int k, std::vector<Cluster> clusters) : k_(check_k(k)) {
        for (Cluster c : clusters) validate_cluster(c);
        std::sort(clusters.begin(), clusters.end(), cluster_less);
        for (std::size_t i = 1; i < clusters.size(); ++i)
            if (clusters[i] == clusters[i - 1])
                throw InvalidArgumentError("duplicate cluster " + clusters[i].label_1based());
        clusters_ = std::move(clusters);
    }

    static Structure singletons_only(int k) {
        std::vector<Cluster> cs;
        cs.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) cs.push_back(Cluster(std::uint64_t{1} << i));
        return Structure(k, std::move(cs));
    }

    int k() const { return k_; }
    const std::vector<Cluster>& clusters() const { return clusters_; }
    std::size_t size() const { return clusters_.size(); }

    bool contains(Cluster c) const {
        return std::binary_search(clusters_.begin(), clusters_.end(), c, cluster_less);
    }

    // Index of a cluster in the canonical ordering; -1 when absent.
    int index_of(Cluster c) const {
        auto it = std::lower_bound(clusters_.begin(), clusters_.end(), c, cluster_less);
        if (it == clusters_.end() || !(*it == c)) return -1;
        return static_cast<int>(it - clusters_.begin());
    }

    // Symmetric difference with {c}: add the cluster if absent, drop it if
    // present. The result keeps canonical ordering.
    Structure with_toggled(Cluster c) const {
        validate_cluster(c);
        Structure out(k_);
        out.clusters_ = clusters_;
        auto it = std::lower_bound(out.clusters_.begin(), out.clusters_.end(), c, cluster_less);
        if (it != out.clusters_.end() && *it == c)
            out.clusters_.erase(it);
        else
            out.clusters_.insert(it, c);
        return out;
    }

    int max_cluster_order() const {
        return clusters_.empty() ? 0 : clusters_.back().order();
    }

    // Stable identity across runs; used as the cache/trace key.
    std::uint64_t hash() const {
        std::uint64_t h = fnv1a64(&k_, sizeof(k_));
        for (Cluster c : clusters_) h = fnv1a64(&c.mask, sizeof(c.mask), h);
        return h;
    }

    friend bool operator==(const Structure& a, const Structure& b) {
        if (a.k_ != b.k_ || a.clusters_.size() != b.clusters_.size()) return false;
        for (std::size_t i = 0; i < a.clusters_.size(); ++i)
            if (!(a.clusters_[i] == b.clusters_[i])) return false;
        return true;
    }

   private:
    static int check_k(int k) {
        if (k < 1 || k > 64) throw InvalidArgumentError("node count must be in [1,64], got " + std::to_string(k));
        return k;
    }
    void validate_cluster(Cluster c) const {
        if (c.empty()) throw InvalidArgumentError("the empty cluster is implicit and may not be stored");
        if (k_ < 64 && (c.mask >> k_) != 0)
            throw InvalidArgumentError("cluster " + c.label_1based() + " references a node >= k=" + std::to_string(k_));
    }

    int k_ = 1;
    std::vector<Cluster> clusters_;
};

}  // namespace loglin
