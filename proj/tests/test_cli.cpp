// Drives the installed CLI binary end to end: schemas, exit codes,
// determinism, and the train/eval round trip. The binary path arrives as
// argv[1] from CTest.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace {

std::string g_binary;
std::filesystem::path g_workdir;

struct RunResult {
    int exit_code = -1;
    std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = g_binary + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe))
        res.stdout_text.append(buf.data(), got);
    int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::string path_of(const char* name) { return (g_workdir / name).string(); }

} // namespace

TEST_CASE("usage errors exit with 2, help with 0") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("nonsense").exit_code == 2);
    CHECK(run_cli("cpe scan --setting bogus --out " + path_of("x.csv")).exit_code == 2);
    CHECK(run_cli("cpe scan --setting well-specified --lambda-grid 8:2:5 --out " +
                  path_of("x.csv"))
              .exit_code == 2);
    CHECK(run_cli("rpb eval --chain " + path_of("does-not-exist.json") + " --out " +
                  path_of("r.csv"))
              .exit_code == 2);
    CHECK(run_cli("rpb train --T 2 --out " + path_of("c.json") + " --frobnicate").exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("rpb --help").exit_code == 0);
}

TEST_CASE("cpe scan: schema, row count, determinism, thread independence") {
    std::string out1 = path_of("scan1.csv"), out2 = path_of("scan2.csv");
    auto res = run_cli("cpe scan --setting prior-misspec --n 5 --seed 1 --lambda-grid 0.25:8:32 "
                       "--samples 4000 --nu 4000 --out " + out1);
    CHECK(res.exit_code == 0);
    CHECK(res.stdout_text.find("cpe=true") != std::string::npos);
    auto rows = lines_of(slurp(out1));
    REQUIRE(rows.size() == 33);
    CHECK(rows[0] == "lambda,gibbs_emp,bayes,dgibbs,dbayes,dbayes_stderr");
    // First and last grid points hit the requested endpoints exactly.
    CHECK(rows[1].substr(0, 5) == "0.25,");
    CHECK(rows[32].substr(0, 2) == "8,");

    auto res2 = run_cli("cpe scan --setting prior-misspec --n 5 --seed 1 --lambda-grid 0.25:8:32 "
                        "--samples 4000 --nu 4000 --threads 4 --out " + out2);
    CHECK(res2.exit_code == 0);
    CHECK(slurp(out1) == slurp(out2));
}

TEST_CASE("conc coverage: schema and empirical rate within threshold") {
    std::string out = path_of("cov.csv");
    auto res = run_cli("conc coverage --n 100 --delta 0.05 --trials 1500 --seed 9 --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(res.stdout_text.find(" ok") != std::string::npos);
    auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 1501);
    CHECK(rows[0] == "trial,violated");
    CHECK(rows[1] == "0,0");

    auto res2 =
        run_cli("conc coverage --mode finite-class --n 200 --trials 1500 --seed 9 --out " + out);
    CHECK(res2.exit_code == 0);
}

TEST_CASE("transforms demo and elbo verify meet their thresholds") {
    auto demo = run_cli("transforms demo --configs 40 --seed 11");
    CHECK(demo.exit_code == 0);
    CHECK(demo.stdout_text.find("max_diff=") != std::string::npos);

    std::string out = path_of("elbo.csv");
    auto elbo = run_cli("elbo verify --D 4 --trials 100 --seed 7 --out " + out);
    CHECK(elbo.exit_code == 0);
    CHECK(elbo.stdout_text.find(" ok") != std::string::npos);
    auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 101);
    CHECK(rows[0] == "trial,residual,kl_avg,mutual_info");
}

TEST_CASE("rpb split reproduces the geometric plan") {
    std::string out = path_of("split.csv");
    auto res = run_cli("rpb split --n 60000 --T 8 --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(res.stdout_text.find("sizes=468,469,938,1875,3750,7500,15000,30000") !=
          std::string::npos);
    auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 9);
    CHECK(rows[0] == "t,size,n_train,n_val,implied_T");
    CHECK(rows[1].find("1,468,468,60000,0.0077999999") == 0);
    CHECK(rows[8] == "8,30000,60000,30000,1");
}

TEST_CASE("rpb train/eval round trip: schema, determinism, validity exit code") {
    std::string chain = path_of("chain.json"), rep1 = path_of("rep1.csv"),
                rep2 = path_of("rep2.csv"), summary = path_of("summary.json");
    auto tr = run_cli("rpb train --T 2 --n 800 --data-seed 4 --seed 4 --epochs 15 --out " + chain);
    CHECK(tr.exit_code == 0);
    CHECK(tr.stdout_text.find("trained T=2") != std::string::npos);

    std::string eval_args = "rpb eval --chain " + chain +
                            " --delta 0.025 --delta-prime 0.01 --rounds 4 --seed 6 "
                            "--holdout-n 5000 --holdout-seed 77 --summary " + summary;
    auto ev1 = run_cli(eval_args + " --out " + rep1);
    CHECK(ev1.exit_code == 0);
    CHECK(ev1.stdout_text.find("valid=true") != std::string::npos);

    auto rows = lines_of(slurp(rep1));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "t,n_val,F_hat,kl_over_nval,E_t,B_t,implied_T,test01");

    auto ev2 = run_cli(eval_args + " --threads 4 --out " + rep2);
    CHECK(ev2.exit_code == 0);
    CHECK(slurp(rep1) == slurp(rep2));

    auto sum = slurp(summary);
    CHECK(sum.find("\"final_bound\"") != std::string::npos);
    CHECK(sum.find("\"valid\":true") != std::string::npos);
}

TEST_CASE("rpb baseline runs all three methods") {
    for (const char* method : {"uninformed", "informed", "informed-excess"}) {
        auto res = run_cli(std::string("rpb baseline --method ") + method +
                           " --n 800 --data-seed 4 --seed 4 --epochs 15 --out " +
                           path_of("base.csv"));
        CHECK(res.exit_code == 0);
        CHECK(res.stdout_text.find("final_bound=") != std::string::npos);
        auto rows = lines_of(slurp(path_of("base.csv")));
        CHECK(rows[0] == "t,n_val,F_hat,kl_over_nval,E_t,B_t,implied_T,test01");
    }
}

TEST_CASE("cpe da: permutation transform diagnostics emit the score check") {
    std::string out = path_of("da.csv");
    auto res = run_cli("cpe da --transform permutation --count 10 --n 5 --m 2000 "
                       "--holdout 2000 --seed 5 --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(res.stdout_text.find("neg_score_mean=") != std::string::npos);
    auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] ==
          "transform,gibbs_cov,gibbs_cov_stderr,bayes_cov,bayes_cov_stderr,"
          "neg_score_mean,neg_score_stderr");
    CHECK(rows[1].substr(0, 12) == "permutation,");
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-cli-binary>\n");
        return 1;
    }
    g_binary = argv[1];
    g_workdir = std::filesystem::temp_directory_path() / "pacbayes_cli_test";
    std::filesystem::create_directories(g_workdir);
    doctest::Context context;
    context.applyCommandLine(1, argv);
    return context.run();
}
