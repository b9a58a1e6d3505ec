// CLI integration checks: every subcommand once, including the piped
// simulate | search form and the error paths. Usage:
//   test_cli <cli-binary> <generator-spec.json>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "loglin/counts.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void expect(bool ok, const std::string& what) {
    if (!ok) ++g_failures;
    std::printf("%s  %s\n", ok ? "ok  " : "FAIL", what.c_str());
}

int run(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: test_cli <cli-binary> <generator-spec.json>\n");
        return 2;
    }
    const std::string cli = "\"" + std::string(argv[1]) + "\"";
    const std::string spec6 = argv[2];
    const fs::path dir = fs::temp_directory_path() / "loglin_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto at = [&](const char* name) { return (dir / name).string(); };

    // bin: two neurons, two segments, known arithmetic.
    write(dir / "spikes.csv", "neuron,time_ms\na,5\na,39\nb,41\na,95\n");
    write(dir / "segments.csv", "start_ms,end_ms\n0,80\n100,180\n");
    expect(run(cli + " bin --spikes " + at("spikes.csv") + " --segments " + at("segments.csv") +
               " --neurons a,b --window-ms 40 --out " + at("binned.csv") + " 2>/dev/null") == 0,
           "bin exits 0");
    {
        std::ifstream in(at("binned.csv"));
        const loglin::ConfigCounts counts = loglin::read_config_counts(in);
        expect(counts.total() == 4, "bin emits one configuration per complete window");
        // windows: [0,40) a only; [40,80) b only; [100,140) none; [140,180) none
        expect(counts.counts().at(1) == 1 && counts.counts().at(2) == 1 && counts.counts().at(0) == 2,
               "bin fills the expected configurations");
    }

    // A small three-node generator for the remaining commands.
    write(dir / "gen3.json",
          R"({"k":3,"n":600,"seed":11,"clusters":[
              {"nodes":[1],"theta":-0.6},{"nodes":[2],"theta":-0.4},
              {"nodes":[3],"theta":-0.8},{"nodes":[1,2],"theta":1.5}]})");
    expect(run(cli + " simulate --spec " + at("gen3.json") + " --out " + at("data3.csv") + " 2>/dev/null") == 0,
           "simulate exits 0");

    // The documented pipe: simulate to stdout, search from stdin.
    expect(run(cli + " simulate --spec " + at("gen3.json") + " 2>/dev/null | " + cli +
               " search --data - --iters 2000 --burn-in 200 --seed 3 --threshold 0.1 > " + at("piped.txt") +
               " 2>/dev/null") == 0,
           "simulate | search pipeline exits 0");
    {
        const std::string out = slurp(dir / "piped.txt");
        expect(out.find("cluster") == 0, "piped search prints the report header");
        expect(out.find("{1,2}") != std::string::npos, "piped search reports the planted pair");
    }

    // fit on exactly symmetric data: theta stays at zero.
    write(dir / "uniform.csv", "config,count\n00,25\n10,25\n01,25\n11,25\n");
    expect(run(cli + " fit --data " + at("uniform.csv") + " --clusters \"1;2\" > " + at("fit.txt") +
               " 2>/dev/null") == 0,
           "fit exits 0");
    {
        const std::string out = slurp(dir / "fit.txt");
        expect(out.find("converged      1") != std::string::npos, "fit converges");
        expect(out.find("{1}  0.0000") != std::string::npos && out.find("{2}  0.0000") != std::string::npos,
               "fit of symmetric data returns zero estimates");
    }

    // search with report/trace/cache dumps, then summarize from the cache.
    expect(run(cli + " search --data " + at("data3.csv") +
               " --iters 2000 --burn-in 200 --seed 3 --report " + at("report.csv") + " --trace " + at("trace.csv") +
               " --cache " + at("cache.csv") + " > " + at("search.txt") + " 2>/dev/null") == 0,
           "search exits 0 and writes dumps");
    expect(run(cli + " summarize --cache " + at("cache.csv") + " --threshold 0.1 > " + at("summary.txt") +
               " 2>/dev/null") == 0,
           "summarize exits 0");
    expect(slurp(dir / "summary.txt") == slurp(dir / "search.txt"),
           "summarize re-renders the search report identically");

    // oracle: exhaustive posterior and the marginal cross-check mode.
    expect(run(cli + " oracle --data " + at("data3.csv") + " --report " + at("oracle.csv") + " > " +
               at("oracle.txt") + " 2>/dev/null") == 0,
           "oracle exits 0");
    {
        const std::string out = slurp(dir / "oracle.txt");
        expect(out.find("top structures:") != std::string::npos, "oracle prints the structure posterior");
    }
    expect(run(cli + " oracle --data " + at("data3.csv") + " --check-marginals --clusters \"1;1,2\" --mc-draws 20000" +
               " --seed 4 > " + at("check.txt") + " 2>/dev/null") == 0,
           "oracle --check-marginals exits 0");
    {
        const std::string out = slurp(dir / "check.txt");
        expect(out.find("laplace") != std::string::npos && out.find("quadrature") != std::string::npos &&
                   out.find("mc ") != std::string::npos,
               "cross-check prints all three marginal estimates");
    }

    // compare: the search report against the exact-posterior report.
    expect(run(cli + " compare --a " + at("report.csv") + " --b " + at("oracle.csv") + " --margin 0.1 > " +
               at("compare.txt") + " 2>/dev/null") == 0,
           "compare exits 0");
    {
        const std::string out = slurp(dir / "compare.txt");
        expect(out.find("{1,2}") != std::string::npos && out.find("differ by more than") != std::string::npos,
               "compare joins the two reports");
    }

    // Error paths exit nonzero.
    expect(run(cli + " search --data " + at("missing.csv") + " 2>/dev/null >/dev/null") != 0,
           "missing data file is an error");
    expect(run(cli + " nonsense 2>/dev/null >/dev/null") != 0, "unknown subcommand is an error");
    write(dir / "bad.csv", "config,count\n0x,3\n");
    expect(run(cli + " fit --data " + at("bad.csv") + " --clusters \"1\" 2>/dev/null >/dev/null") != 0,
           "malformed counts file is an error");
    expect(run(cli + " fit --data " + at("uniform.csv") + " --clusters \"9\" 2>/dev/null >/dev/null") != 0,
           "cluster beyond k is an error");

    if (g_failures > 0) {
        std::printf("%d CLI check(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all CLI checks passed\n");
    return 0;
}
