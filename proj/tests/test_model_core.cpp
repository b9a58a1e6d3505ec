#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/model.hpp"
#include "loglin/synth.hpp"
#include "loglin/types.hpp"
#include "test_support.hpp"

using namespace loglin;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// The six-node benchmark generator used throughout the tests.
Structure bench6_structure() {
    return Structure(6, {Cluster::from_nodes({0}), Cluster::from_nodes({1}), Cluster::from_nodes({2}),
                         Cluster::from_nodes({3}), Cluster::from_nodes({4}), Cluster::from_nodes({5}),
                         Cluster::from_nodes({3, 5}), Cluster::from_nodes({2, 3, 5}),
                         Cluster::from_nodes({1, 2, 3, 4}), Cluster::from_nodes({1, 2, 3, 4, 5})});
}

std::vector<double> bench6_theta() {
    // Aligned with the canonical (order, mask) cluster ordering above.
    return {-1.52, -1.74, -3.24, -0.82, -2.78, -0.83, 0.45, 0.74, 1.79, 0.61};
}

}  // namespace

TEST_CASE("cluster indicator is subset containment") {
    const Config x = config_from_string("110");
    CHECK(cluster_indicator(x, Cluster::from_nodes({0, 1})) == 1);
    CHECK(cluster_indicator(x, Cluster::from_nodes({1, 2})) == 0);
    CHECK(cluster_indicator(config_from_string("000"), Cluster()) == 1);
}

TEST_CASE("structures reject clusters referencing nodes beyond k") {
    CHECK_THROWS_AS(Structure(3, {Cluster::from_nodes({3})}), InvalidArgumentError);
    CHECK_THROWS_AS(Structure(3, {Cluster::from_nodes({0}), Cluster::from_nodes({0})}), InvalidArgumentError);
    CHECK_THROWS_AS(Structure(3, {Cluster()}), InvalidArgumentError);
}

TEST_CASE("theta_empty matches hand-computed normalizers") {
    CHECK_THAT(theta_empty(Structure(1, {Cluster::from_nodes({0})}), {0.0}), WithinAbs(-std::log(2.0), 1e-14));
    CHECK_THAT(theta_empty(Structure(3), {}), WithinAbs(-3.0 * std::log(2.0), 1e-14));

    const Structure s(2, {Cluster::from_nodes({0}), Cluster::from_nodes({1}), Cluster::from_nodes({0, 1})});
    CHECK_THAT(theta_empty(s, {0.0, 0.0, std::log(2.0)}), WithinAbs(-std::log(5.0), 1e-14));
}

TEST_CASE("theta_empty refuses k above the enumeration limit") {
    CHECK_THROWS_AS(theta_empty(Structure(21), {}), CapacityError);
    CHECK_NOTHROW(theta_empty(Structure(21), {}, 21));
}

TEST_CASE("config_log_prob values and normalization") {
    const Structure s(2, {Cluster::from_nodes({0}), Cluster::from_nodes({1}), Cluster::from_nodes({0, 1})});
    CHECK_THAT(config_log_prob(config_from_string("11"), s, {0.0, 0.0, std::log(2.0)}),
               WithinAbs(std::log(2.0 / 5.0), 1e-14));

    const Structure single(1, {Cluster::from_nodes({0})});
    CHECK_THAT(config_log_prob(config_from_string("1"), single, {std::log(3.0)}), WithinAbs(std::log(0.75), 1e-14));

    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 11);  // up to 12
        const Structure st = test_support::random_structure(rng, k, 4);
        const std::vector<double> theta = test_support::random_theta(rng, st.size(), 2.5);
        double total = 0.0;
        for (std::uint64_t x = 0; x < (std::uint64_t{1} << k); ++x)
            total += std::exp(config_log_prob(Config(x), st, theta));
        CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("config_distribution closed-form cases") {
    const std::vector<double> uniform = config_distribution(Structure(2), {});
    REQUIRE(uniform.size() == 4);
    for (double p : uniform) CHECK_THAT(p, WithinAbs(0.25, 1e-14));

    const Structure s(2, {Cluster::from_nodes({0}), Cluster::from_nodes({1}), Cluster::from_nodes({0, 1})});
    const std::vector<double> p = config_distribution(s, {0.0, 0.0, std::log(2.0)});
    CHECK_THAT(p[0], WithinAbs(0.2, 1e-14));
    CHECK_THAT(p[1], WithinAbs(0.2, 1e-14));
    CHECK_THAT(p[2], WithinAbs(0.2, 1e-14));
    CHECK_THAT(p[3], WithinAbs(0.4, 1e-14));
}

TEST_CASE("config_distribution agrees with naive direct evaluation") {
    // Independent route: plain exponentials normalized by a plain sum.
    const Structure s = bench6_structure();
    const std::vector<double> theta = bench6_theta();
    std::vector<double> naive(std::size_t{1} << 6, 0.0);
    double z = 0.0;
    for (std::uint64_t x = 0; x < naive.size(); ++x) {
        double h = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j)
            if ((x & s.clusters()[j].mask) == s.clusters()[j].mask) h += theta[j];
        naive[x] = std::exp(h);
        z += naive[x];
    }
    const std::vector<double> p = config_distribution(s, theta);
    for (std::uint64_t x = 0; x < naive.size(); ++x) CHECK_THAT(p[x], WithinRel(naive[x] / z, 1e-12));
}

TEST_CASE("cluster_moment matches hand case and containment bound") {
    const Structure s(2, {Cluster::from_nodes({0}), Cluster::from_nodes({1}), Cluster::from_nodes({0, 1})});
    const std::vector<double> theta{0.0, 0.0, std::log(2.0)};
    CHECK_THAT(cluster_moment(s, theta, Cluster::from_nodes({0, 1})), WithinAbs(0.4, 1e-14));
    CHECK_THAT(cluster_moment(s, theta, Cluster()), WithinAbs(1.0, 0.0));

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 3 + static_cast<int>(rng() % 4);
        const Structure st = test_support::random_structure(rng, k, 3);
        const std::vector<double> th = test_support::random_theta(rng, st.size(), 2.0);
        const std::uint64_t full = (std::uint64_t{1} << k) - 1;
        const Cluster a((rng() & full) | 1);
        const Cluster b((rng() & full) | 1);
        const Cluster both(a.mask | b.mask);
        const double m_both = cluster_moment(st, th, both);
        CHECK(m_both <= cluster_moment(st, th, a) + 1e-14);
        CHECK(m_both <= cluster_moment(st, th, b) + 1e-14);
    }
}

TEST_CASE("cluster_moment agrees with a sampling oracle on the benchmark model") {
    const Structure s = bench6_structure();
    const std::vector<double> theta = bench6_theta();
    const Cluster xi = Cluster::from_nodes({3, 5});
    const double moment = cluster_moment(s, theta, xi);

    GeneratorSpec spec;
    spec.k = 6;
    spec.structure = s;
    spec.theta = theta;
    spec.n_obs = 1000000;
    spec.seed = 20240817;
    const ConfigCounts sample = sample_configurations(spec);
    std::uint64_t hits = 0;
    for (const auto& [bits, n] : sample.counts())
        if ((bits & xi.mask) == xi.mask) hits += n;
    const double freq = static_cast<double>(hits) / static_cast<double>(spec.n_obs);
    const double se = std::sqrt(moment * (1.0 - moment) / static_cast<double>(spec.n_obs));
    CHECK_THAT(freq, WithinAbs(moment, 3.0 * se));
}

TEST_CASE("sufficient statistics") {
    ConfigCounts data(2);
    data.add(config_from_string("11"), 3);
    data.add(config_from_string("00"), 1);

    const Structure pair_only(2, {Cluster::from_nodes({0, 1})});
    CHECK_THAT(sufficient_stats(data, pair_only)[0], WithinAbs(0.75, 0.0));

    // Singleton marginal equals the node's firing rate.
    ConfigCounts d2(2);
    d2.add(config_from_string("10"), 2);
    d2.add(config_from_string("11"), 1);
    d2.add(config_from_string("00"), 1);
    const Structure singles = Structure::singletons_only(2);
    const std::vector<double> st = sufficient_stats(d2, singles);
    CHECK_THAT(st[0], WithinAbs(0.75, 0.0));
    CHECK_THAT(st[1], WithinAbs(0.25, 0.0));

    CHECK_THROWS_AS(sufficient_stats(data, Structure(3)), InvalidArgumentError);
}

TEST_CASE("sufficient statistics ignore construction order") {
    std::mt19937_64 rng(3);
    const int k = 5;
    std::vector<Config> configs;
    for (int i = 0; i < 400; ++i) configs.push_back(Config(rng() & 0x1f));

    ConfigCounts forward(k);
    for (Config c : configs) forward.add(c);
    ConfigCounts backward(k);
    for (auto it = configs.rbegin(); it != configs.rend(); ++it) backward.add(*it);

    REQUIRE(forward == backward);
    const Structure st = test_support::random_structure(rng, k, 4);
    const std::vector<double> a = sufficient_stats(forward, st);
    const std::vector<double> b = sufficient_stats(backward, st);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("appending a zero-weight cluster leaves the distribution unchanged") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 3 + static_cast<int>(rng() % 3);
        const Structure st = test_support::random_structure(rng, k, 2);
        std::vector<double> theta = test_support::random_theta(rng, st.size(), 2.0);
        const std::vector<double> base = config_distribution(st, theta);

        const std::uint64_t full = (std::uint64_t{1} << k) - 1;
        Cluster extra;
        do {
            extra = Cluster((rng() & full) | 1);
        } while (st.contains(extra));
        const Structure wider = st.with_toggled(extra);
        std::vector<double> wide_theta(wider.size(), 0.0);
        for (std::size_t j = 0; j < st.size(); ++j)
            wide_theta[static_cast<std::size_t>(wider.index_of(st.clusters()[j]))] = theta[j];

        const std::vector<double> ext = config_distribution(wider, wide_theta);
        for (std::size_t x = 0; x < base.size(); ++x) CHECK_THAT(ext[x], WithinAbs(base[x], 1e-12));
    }
}

TEST_CASE("node relabeling commutes with indicators, stats, and probabilities") {
    std::mt19937_64 rng(29);
    const int k = 5;
    std::vector<int> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);

    const Structure st = test_support::random_structure(rng, k, 4);
    const std::vector<double> theta = test_support::random_theta(rng, st.size(), 2.0);
    const ConfigCounts data = test_support::random_counts(rng, k, 300);

    std::vector<Cluster> pclusters;
    for (Cluster c : st.clusters()) pclusters.emplace_back(test_support::permute_mask(c.mask, perm));
    std::vector<std::size_t> order(pclusters.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cluster_less(pclusters[a], pclusters[b]); });
    std::vector<Cluster> sorted_clusters;
    std::vector<double> ptheta;
    for (std::size_t i : order) {
        sorted_clusters.push_back(pclusters[i]);
        ptheta.push_back(theta[i]);
    }
    const Structure pst(k, sorted_clusters);

    ConfigCounts pdata(k);
    for (const auto& [bits, n] : data.counts()) pdata.add(Config(test_support::permute_mask(bits, perm)), n);

    // Indicators and stats are bit-exact under relabeling.
    for (std::size_t j = 0; j < st.size(); ++j) {
        const double orig = sufficient_stats(data, st)[j];
        const auto pj = static_cast<std::size_t>(pst.index_of(pclusters[j]));
        CHECK(sufficient_stats(pdata, pst)[pj] == orig);
    }

    const std::vector<double> p = config_distribution(st, theta);
    const std::vector<double> pp = config_distribution(pst, ptheta);
    for (std::uint64_t x = 0; x < p.size(); ++x)
        CHECK_THAT(pp[test_support::permute_mask(x, perm)], WithinAbs(p[x], 1e-12));
}

TEST_CASE("moments shrink as clusters grow") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 4;
        const Structure st = test_support::random_structure(rng, k, 3);
        const std::vector<double> theta = test_support::random_theta(rng, st.size(), 2.0);
        const std::uint64_t sub = (rng() & 0xf) | 1;
        const std::uint64_t super = sub | (rng() & 0xf);
        CHECK(cluster_moment(st, theta, Cluster(sub)) >= cluster_moment(st, theta, Cluster(super)) - 1e-14);
    }
}

TEST_CASE("counts CSV round-trips and sums duplicates") {
    ConfigCounts data(3);
    data.add(config_from_string("110"), 5);
    data.add(config_from_string("001"), 2);
    data.add(config_from_string("000"), 7);

    std::stringstream ss;
    write_config_counts(ss, data);
    const ConfigCounts back = read_config_counts(ss);
    CHECK(back == data);

    // Writer emits rows sorted by bitmask: 000 < 110(mask 3) < 001(mask 4).
    std::stringstream out;
    write_config_counts(out, data);
    CHECK(out.str() == "config,count\n000,7\n110,5\n001,2\n");

    std::stringstream dup("config,count\n10,1\n10,2\n01,4\n");
    const ConfigCounts summed = read_config_counts(dup);
    CHECK(summed.total() == 7);
    CHECK(summed.counts().at(config_from_string("10").bits) == 3);
}

TEST_CASE("counts CSV rejects malformed input") {
    std::stringstream bad_header("shape,count\n10,1\n");
    CHECK_THROWS_AS(read_config_counts(bad_header), ParseError);

    std::stringstream bad_width("config,count\n10,1\n101,2\n");
    CHECK_THROWS_AS(read_config_counts(bad_width), ParseError);

    std::stringstream bad_count("config,count\n10,-3\n");
    CHECK_THROWS_AS(read_config_counts(bad_count), ParseError);

    std::stringstream bad_bits("config,count\n1x,3\n");
    CHECK_THROWS_AS(read_config_counts(bad_bits), ParseError);

    std::stringstream empty("");
    CHECK_THROWS_AS(read_config_counts(empty), ParseError);
}
