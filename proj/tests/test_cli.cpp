#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(KUQ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int line_count(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& name) : path(fs::path("kuq_cli_tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

const std::string kCase = oracle::data_file("ieee39.json");

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate writes the expected snapshot count") {
    TmpDir dir("sim");
    const int rc = run_cli("simulate --case " + kCase + " --outage 15-16 --out-dir " +
                           dir.str());
    REQUIRE(rc == 0);
    // 10 s at dt_snap 0.01 s: header + 1001 rows
    CHECK(line_count(dir.path / "trajectory.csv") == 1002);
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "timings.json"));
}

TEST_CASE("zero-horizon simulate emits header plus the initial row") {
    TmpDir dir("sim0");
    const int rc = run_cli("simulate --case " + kCase + " --horizon 0 --out-dir " +
                           dir.str());
    REQUIRE(rc == 0);
    CHECK(line_count(dir.path / "trajectory.csv") == 2);
}

TEST_CASE("missing case file exits with the config code") {
    TmpDir dir("miss");
    CHECK(run_cli("simulate --case nowhere.json --out-dir " + dir.str()) == 2);
}

TEST_CASE("unknown flag exits with the config code") {
    CHECK(run_cli("simulate --definitely-not-a-flag") == 2);
}

TEST_CASE("minimal train run completes and reports n_d") {
    TmpDir dir("train");
    const int rc = run_cli("train --case " + kCase +
                           " --outage 15-16 --n-t 2 --horizon 0.2 --dictionary linear"
                           " --out-dir " + dir.str());
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir.path / "model.kpm"));
    const std::string report = slurp(dir.path / "train_report.json");
    CHECK(report.find("\"n_d\": 31") != std::string::npos);  // 1 + 2*10 + 10
}

TEST_CASE("evaluate without a model exits with the i/o code") {
    TmpDir dir("nomodel");
    CHECK(run_cli("evaluate --case " + kCase + " --model nowhere.kpm --n-mc 2"
                  " --out-dir " + dir.str()) == 4);
}

TEST_CASE("mc, evaluate, and self-compare round-trip") {
    TmpDir dir("roundtrip");
    const std::string common = " --case " + kCase +
                               " --outage 15-16 --horizon 0.2 --seed 9 --out-dir ";
    REQUIRE(run_cli("train --n-t 4 --dictionary hermite2" + common +
                    (dir.path / "train").string()) == 0);
    REQUIRE(run_cli("mc --n-mc 4" + common + (dir.path / "mc").string()) == 0);
    REQUIRE(run_cli("evaluate --n-mc 4 --model " +
                    (dir.path / "train" / "model.kpm").string() + common +
                    (dir.path / "eval").string()) == 0);

    CHECK(line_count(dir.path / "mc" / "ensemble.csv") == 5);
    CHECK(line_count(dir.path / "mc" / "moments.csv") == 22);  // header + 21 rows

    const int rc = run_cli("compare --bench " + (dir.path / "mc").string() +
                           " --test " + (dir.path / "mc").string() +
                           " --t0 0 --t1 0.2 --ks-time 0.1 --out " +
                           (dir.path / "report.json").string());
    REQUIRE(rc == 0);
    const std::string report = slurp(dir.path / "report.json");
    CHECK(report.find("\"mean_abs_err_max\": 0") != std::string::npos);
}

TEST_CASE("seeded reruns produce byte-identical manifests") {
    TmpDir dir("det");
    const std::string common = " --case " + kCase +
                               " --outage 15-16 --horizon 0.2 --n-mc 3 --seed 4"
                               " --out-dir " + (dir.path / "run").string();
    REQUIRE(run_cli("mc --threads 1" + common) == 0);
    const std::string first = slurp(dir.path / "run" / "manifest.json");
    REQUIRE_FALSE(first.empty());
    // Rerun in place with a different thread count: outputs and manifest
    // must not change.
    REQUIRE(run_cli("mc --threads 2" + common) == 0);
    const std::string second = slurp(dir.path / "run" / "manifest.json");
    CHECK(first == second);
}

}  // TEST_SUITE
