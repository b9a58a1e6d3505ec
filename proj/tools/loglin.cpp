// Command-line frontend: bin spike trains, simulate from a generator spec,
// fit a fixed structure, search structures with MC3, re-render summaries,
// run the brute-force oracles, and compare two reports.

#include <CLI11.hpp>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "loglin/loglin.hpp"

namespace {

using namespace loglin;

ConfigCounts load_counts(const std::string& path) {
    if (path == "-") return read_config_counts(std::cin);
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_config_counts(in);
}

void with_output(const std::string& path, const std::function<void(std::ostream&)>& writer) {
    if (path == "-") {
        writer(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    writer(out);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// One reproducibility line per run: every effective setting, defaults included.
void log_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cerr << "loglin " << cmd << ':';
    for (const auto& [k, v] : kv) std::cerr << ' ' << k << '=' << v;
    std::cerr << '\n';
}

struct PriorFlags {
    double sigma = 2.0;
    double q_high = 0.1;
    double q_single = 0.9;

    void attach(CLI::App* app) {
        app->add_option("--sigma", sigma, "Prior standard deviation for interaction parameters");
        app->add_option("--q-high", q_high, "Prior inclusion probability for clusters of order >= 2");
        app->add_option("--q-single", q_single, "Prior inclusion probability for singletons");
    }
    PriorSpec spec() const { return PriorSpec{sigma, q_high, q_single}; }
};

void print_fit(const StructureFit& fit) {
    std::cout << "structure      " << format_cluster_list(fit.structure) << '\n';
    std::cout << "converged      " << (fit.converged ? 1 : 0) << '\n';
    std::cout << "iterations     " << fit.iterations << '\n';
    std::cout << "gradient_norm  " << fmt("%.3g", fit.gradient_norm) << '\n';
    std::cout << "log_marginal   " << fmt("%.6f", fit.log_marginal) << '\n';
    std::cout << "cluster  theta  sd\n";
    for (std::size_t i = 0; i < fit.structure.size(); ++i) {
        const auto j = static_cast<Eigen::Index>(i);
        std::cout << fit.structure.clusters()[i].label_1based() << "  " << fmt("%.4f", fit.theta_map[i]) << "  "
                  << fmt("%.4f", std::sqrt(fit.covariance(j, j))) << '\n';
    }
}

int run_bin(const std::string& spikes_path, const std::string& segments_path, const std::string& neurons,
            std::uint64_t window_ms, std::uint64_t spike_threshold, const std::string& out_path) {
    log_config("bin", {{"spikes", spikes_path},
                       {"segments", segments_path},
                       {"neurons", neurons},
                       {"window-ms", std::to_string(window_ms)},
                       {"spike-threshold", std::to_string(spike_threshold)}});
    std::ifstream sp(spikes_path);
    if (!sp) throw Error("cannot open '" + spikes_path + "'");
    std::ifstream sg(segments_path);
    if (!sg) throw Error("cannot open '" + segments_path + "'");
    BinningConfig cfg;
    cfg.window_ms = window_ms;
    cfg.spike_threshold = spike_threshold;
    cfg.neurons = split_commas(neurons);
    std::vector<std::string> warnings;
    const ConfigCounts counts = bin_spikes(read_spike_events(sp), read_segments(sg), cfg, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
    with_output(out_path, [&](std::ostream& os) { write_config_counts(os, counts); });
    return 0;
}

int run_simulate(const std::string& spec_path, std::int64_t seed_override, std::int64_t n_override,
                 const std::string& out_path) {
    std::ifstream in(spec_path);
    if (!in) throw Error("cannot open '" + spec_path + "'");
    GeneratorSpec spec = load_generator_spec(in);
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    if (n_override > 0) spec.n_obs = static_cast<std::uint64_t>(n_override);
    log_config("simulate", {{"spec", spec_path},
                            {"k", std::to_string(spec.k)},
                            {"n", std::to_string(spec.n_obs)},
                            {"seed", std::to_string(spec.seed)}});
    const ConfigCounts counts = sample_configurations(spec);
    with_output(out_path, [&](std::ostream& os) { write_config_counts(os, counts); });
    return 0;
}

int run_fit(const std::string& data_path, const std::string& clusters, const PriorFlags& prior, double tol,
            int max_iter) {
    log_config("fit", {{"data", data_path},
                       {"clusters", clusters},
                       {"sigma", fmt("%g", prior.sigma)},
                       {"q-high", fmt("%g", prior.q_high)},
                       {"q-single", fmt("%g", prior.q_single)},
                       {"tol", fmt("%g", tol)},
                       {"max-iter", std::to_string(max_iter)}});
    const ConfigCounts data = load_counts(data_path);
    const Structure structure = parse_structure(clusters, data.k());
    FitOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    print_fit(newton_map(structure, data, prior.spec(), opts));
    return 0;
}

int run_search(const std::string& data_path, SearchConfig cfg, const PriorFlags& prior, double threshold,
               const std::string& report_path, const std::string& trace_path, const std::string& cache_path) {
    const ConfigCounts data = load_counts(data_path);
    log_config("search", {{"data", data_path},
                          {"k", std::to_string(data.k())},
                          {"n", std::to_string(data.total())},
                          {"iters", std::to_string(cfg.iterations)},
                          {"burn-in", std::to_string(cfg.burn_in)},
                          {"max-order", std::to_string(cfg.max_order == 0 ? data.k() : cfg.max_order)},
                          {"top-k", std::to_string(cfg.top_k)},
                          {"seed", std::to_string(cfg.seed)},
                          {"threshold", fmt("%g", threshold)},
                          {"sigma", fmt("%g", prior.sigma)},
                          {"q-high", fmt("%g", prior.q_high)},
                          {"q-single", fmt("%g", prior.q_single)},
                          {"singleton-moves", cfg.singleton_moves ? "1" : "0"},
                          {"adapt", cfg.adapt_proposals ? "1" : "0"}});
    const ChainTrace trace = mc3_run(data, cfg, prior.spec());
    const std::vector<ClusterReport> reports = build_cluster_reports(trace, cfg.top_k);
    std::cout << render_report_text(reports, threshold);
    if (!report_path.empty())
        with_output(report_path, [&](std::ostream& os) { write_report_csv(os, reports, threshold); });
    if (!trace_path.empty()) with_output(trace_path, [&](std::ostream& os) { write_trace_dump(os, trace); });
    if (!cache_path.empty()) with_output(cache_path, [&](std::ostream& os) { write_cache_dump(os, trace); });
    return 0;
}

int run_summarize(const std::string& cache_path, std::size_t top_k, double threshold,
                  const std::string& report_path) {
    log_config("summarize", {{"cache", cache_path},
                             {"top-k", std::to_string(top_k)},
                             {"threshold", fmt("%g", threshold)}});
    std::ifstream in(cache_path);
    if (!in) throw Error("cannot open '" + cache_path + "'");
    const CacheDump dump = read_cache_dump(in);
    const std::vector<ClusterReport> reports = build_cluster_reports(dump.cache, dump.visits, top_k);
    std::cout << render_report_text(reports, threshold);
    if (!report_path.empty())
        with_output(report_path, [&](std::ostream& os) { write_report_csv(os, reports, threshold); });
    return 0;
}

int run_oracle(const std::string& data_path, int max_order, std::size_t limit, const PriorFlags& prior,
               double threshold, const std::string& report_path, bool check_marginals, const std::string& clusters,
               std::uint64_t mc_draws, std::uint64_t seed) {
    const ConfigCounts data = load_counts(data_path);
    const int order = max_order == 0 ? data.k() : max_order;

    if (check_marginals) {
        log_config("oracle", {{"data", data_path},
                              {"mode", "check-marginals"},
                              {"clusters", clusters},
                              {"mc-draws", std::to_string(mc_draws)},
                              {"seed", std::to_string(seed)},
                              {"sigma", fmt("%g", prior.sigma)}});
        const Structure structure = parse_structure(clusters, data.k());
        const StructureFit fit = newton_map(structure, data, prior.spec());
        std::cout << "structure   " << format_cluster_list(structure) << '\n';
        std::cout << "laplace     " << fmt("%.6f", fit.log_marginal) << '\n';
        if (structure.size() <= 2) {
            const double q = quadrature_log_marginal(structure, data, prior.spec());
            std::cout << "quadrature  " << fmt("%.6f", q) << "  |diff| " << fmt("%.3g", std::abs(q - fit.log_marginal))
                      << '\n';
        } else {
            std::cout << "quadrature  skipped (needs <= 2 clusters)\n";
        }
        std::mt19937_64 rng(seed);
        const McEstimate mc = mc_log_marginal(structure, data, prior.spec(), mc_draws, rng);
        std::cout << "mc          " << fmt("%.6f", mc.estimate) << "  se " << fmt("%.3g", mc.std_error) << '\n';
        return 0;
    }

    log_config("oracle", {{"data", data_path},
                          {"max-order", std::to_string(order)},
                          {"limit", std::to_string(limit)},
                          {"threshold", fmt("%g", threshold)},
                          {"sigma", fmt("%g", prior.sigma)},
                          {"q-high", fmt("%g", prior.q_high)},
                          {"q-single", fmt("%g", prior.q_single)}});

    // Score every enumerable structure once; weighting the whole cache is
    // exactly the enumeration posterior, so the shared summary machinery
    // applies with K = |cache|.
    StructureCache cache;
    for (const Structure& s : enumerate_structures(data.k(), order, false)) {
        CacheEntry e;
        e.structure = s;
        e.log_prior = structure_log_prior(s, prior.spec(), order);
        try {
            e.fit = newton_map(s, data, prior.spec());
        } catch (const FitError&) {
            e.fit.structure = s;
        }
        cache.emplace(s.hash(), std::move(e));
    }
    std::vector<ClusterReport> reports = build_cluster_reports(cache, loglin::detail::PostVisits{}, cache.size());
    for (ClusterReport& r : reports) r.p_freq = r.p_topk;  // exact posterior, single estimator

    std::cout << "exact inclusion probabilities (threshold " << fmt("%g", threshold) << "):\n";
    std::cout << render_report_text(reports, threshold);
    std::cout << "\ntop structures:\n";
    const TopKSelection sel = top_k_selection(cache, cache.size());
    for (std::size_t i = 0; i < sel.entries.size() && i < limit; ++i)
        std::cout << fmt("%8.5f", sel.weights[i]) << "  " << format_cluster_list(sel.entries[i]->structure) << '\n';
    if (!report_path.empty())
        with_output(report_path, [&](std::ostream& os) { write_report_csv(os, reports, threshold); });
    return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path, double margin) {
    log_config("compare", {{"a", a_path}, {"b", b_path}, {"margin", fmt("%g", margin)}});
    auto load = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open '" + path + "'");
        return read_report_csv(in);
    };
    const std::vector<ReportRow> a = load(a_path);
    const std::vector<ReportRow> b = load(b_path);

    std::map<std::string, std::pair<const ReportRow*, const ReportRow*>> joined;
    for (const ReportRow& r : a) joined[r.cluster_label].first = &r;
    for (const ReportRow& r : b) joined[r.cluster_label].second = &r;

    std::vector<std::pair<Cluster, std::string>> order;
    for (const auto& [label, rows] : joined) order.emplace_back(parse_cluster_label(label, 64), label);
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return cluster_less(x.first, y.first); });

    std::cout << "cluster  p_freq_a  p_freq_b  delta  theta_a  theta_b  flag\n";
    int flagged = 0;
    for (const auto& [cluster, label] : order) {
        const auto [ra, rb] = joined.at(label);
        const double pa = ra ? ra->p_freq : 0.0;
        const double pb = rb ? rb->p_freq : 0.0;
        const double delta = std::abs(pa - pb);
        const bool flag = delta > margin;
        flagged += flag ? 1 : 0;
        std::cout << label << "  " << fmt("%.2f", pa) << "  " << fmt("%.2f", pb) << "  " << fmt("%.2f", delta) << "  "
                  << (ra ? fmt("%.2f", ra->theta_cond) : std::string("-")) << "  "
                  << (rb ? fmt("%.2f", rb->theta_cond) : std::string("-")) << "  " << (flag ? "*" : "") << '\n';
    }
    std::cout << flagged << " cluster(s) differ by more than " << fmt("%g", margin) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian structure learning for loglinear interaction models over binary configurations"};
    app.require_subcommand(1);

    // bin
    auto* bin = app.add_subcommand("bin", "Bin spike events into configuration counts");
    std::string spikes_path, segments_path, neurons, bin_out = "-";
    std::uint64_t window_ms = 40, spike_threshold = 1;
    bin->add_option("--spikes", spikes_path, "Spike events CSV (neuron,time_ms)")->required();
    bin->add_option("--segments", segments_path, "Stationary segments CSV (start_ms,end_ms)")->required();
    bin->add_option("--neurons", neurons, "Comma-separated neuron labels, in node order")->required();
    bin->add_option("--window-ms", window_ms, "Window width in milliseconds");
    bin->add_option("--spike-threshold", spike_threshold, "Spikes per window needed to count as active");
    bin->add_option("--out", bin_out, "Output counts CSV ('-' = stdout)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Sample configuration counts from a generator spec");
    std::string spec_path, sim_out = "-";
    std::int64_t sim_seed = -1, sim_n = 0;
    sim->add_option("--spec", spec_path, "Generator spec JSON")->required();
    sim->add_option("--seed", sim_seed, "Override the spec's seed");
    sim->add_option("--n", sim_n, "Override the spec's sample size");
    sim->add_option("--out", sim_out, "Output counts CSV ('-' = stdout)");

    // fit
    auto* fit = app.add_subcommand("fit", "MAP-fit one fixed structure");
    std::string fit_data = "-", fit_clusters;
    PriorFlags fit_prior;
    double fit_tol = 1e-8;
    int fit_max_iter = 100;
    fit->add_option("--data", fit_data, "Counts CSV ('-' = stdin)");
    fit->add_option("--clusters", fit_clusters, "Semicolon-separated clusters of 1-based nodes, e.g. '1;2;4,6'")
        ->required();
    fit_prior.attach(fit);
    fit->add_option("--tol", fit_tol, "Gradient sup-norm tolerance");
    fit->add_option("--max-iter", fit_max_iter, "Newton iteration limit");

    // search
    auto* search = app.add_subcommand("search", "MC3 structure search and report");
    std::string search_data = "-", report_path, trace_path, cache_path;
    SearchConfig cfg;
    PriorFlags search_prior;
    double search_threshold = 0.1;
    search->add_option("--data", search_data, "Counts CSV ('-' = stdin)");
    search->add_option("--iters", cfg.iterations, "Total chain iterations (burn-in included)");
    search->add_option("--burn-in", cfg.burn_in, "Burn-in iterations (adaptation window)");
    search->add_option("--max-order", cfg.max_order, "Largest cluster order proposed (0 = k)");
    search->add_option("--top-k", cfg.top_k, "Structures kept for renormalized summaries");
    search->add_option("--seed", cfg.seed, "Chain seed");
    search->add_option("--threshold", search_threshold, "Minimum inclusion probability reported");
    search->add_flag("--singleton-moves", cfg.singleton_moves, "Allow toggling singleton clusters");
    search->add_flag("!--no-adapt", cfg.adapt_proposals, "Disable proposal adaptation during burn-in");
    search_prior.attach(search);
    search->add_option("--report", report_path, "Write the report as CSV");
    search->add_option("--trace", trace_path, "Write the per-iteration trace");
    search->add_option("--cache", cache_path, "Write the structure cache dump");

    // summarize
    auto* summarize = app.add_subcommand("summarize", "Re-render a report from a cache dump");
    std::string sum_cache, sum_report;
    std::size_t sum_top_k = 100;
    double sum_threshold = 0.1;
    summarize->add_option("--cache", sum_cache, "Cache dump from 'search --cache'")->required();
    summarize->add_option("--top-k", sum_top_k, "Structures kept for renormalized summaries");
    summarize->add_option("--threshold", sum_threshold, "Minimum inclusion probability reported");
    summarize->add_option("--report", sum_report, "Write the report as CSV");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "Exhaustive enumeration posterior / marginal cross-checks");
    std::string oracle_data = "-", oracle_report, oracle_clusters;
    int oracle_max_order = 0;
    std::size_t oracle_limit = 20;
    PriorFlags oracle_prior;
    double oracle_threshold = 0.0;
    bool check_marginals = false;
    std::uint64_t mc_draws = 100000, oracle_seed = 0;
    oracle->add_option("--data", oracle_data, "Counts CSV ('-' = stdin)");
    oracle->add_option("--max-order", oracle_max_order, "Largest cluster order enumerated (0 = k)");
    oracle->add_option("--limit", oracle_limit, "Structures printed from the posterior");
    oracle->add_option("--threshold", oracle_threshold, "Minimum inclusion probability reported");
    oracle_prior.attach(oracle);
    oracle->add_option("--report", oracle_report, "Write exact inclusion report as CSV");
    oracle->add_flag("--check-marginals", check_marginals, "Cross-check Laplace vs quadrature vs Monte Carlo");
    oracle->add_option("--clusters", oracle_clusters, "Structure for --check-marginals");
    oracle->add_option("--mc-draws", mc_draws, "Monte Carlo draws for --check-marginals");
    oracle->add_option("--seed", oracle_seed, "Monte Carlo seed for --check-marginals");

    // compare
    auto* compare = app.add_subcommand("compare", "Side-by-side comparison of two report CSVs");
    std::string cmp_a, cmp_b;
    double margin = 0.1;
    compare->add_option("--a", cmp_a, "First report CSV")->required();
    compare->add_option("--b", cmp_b, "Second report CSV")->required();
    compare->add_option("--margin", margin, "Flag clusters whose inclusion probabilities differ by more than this");

    CLI11_PARSE(app, argc, argv);

    try {
        if (bin->parsed()) return run_bin(spikes_path, segments_path, neurons, window_ms, spike_threshold, bin_out);
        if (sim->parsed()) return run_simulate(spec_path, sim_seed, sim_n, sim_out);
        if (fit->parsed()) return run_fit(fit_data, fit_clusters, fit_prior, fit_tol, fit_max_iter);
        if (search->parsed())
            return run_search(search_data, cfg, search_prior, search_threshold, report_path, trace_path, cache_path);
        if (summarize->parsed()) return run_summarize(sum_cache, sum_top_k, sum_threshold, sum_report);
        if (oracle->parsed())
            return run_oracle(oracle_data, oracle_max_order, oracle_limit, oracle_prior, oracle_threshold,
                              oracle_report, check_marginals, oracle_clusters, mc_draws, oracle_seed);
        if (compare->parsed()) return run_compare(cmp_a, cmp_b, margin);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
