// Runs the hllsh binary and checks outputs and exit codes.

#include "hllsh/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef HLLSH_CLI_PATH
#error "HLLSH_CLI_PATH must point at the hllsh binary"
#endif

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("hllsh_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream(path(name), std::ios::binary) << content;
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    CliRun run(const std::string& args) const {
        const std::string err_path = path("stderr.txt");
        const std::string cmd = std::string(HLLSH_CLI_PATH) + " " + args + " 2>" + err_path;
        CliRun r;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (pipe == nullptr) {
            return r;
        }
        char buf[4096];
        std::size_t got = 0;
        while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
            r.out.append(buf, got);
        }
        const int status = ::pclose(pipe);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err_path);
        return r;
    }

    fs::path dir_;
};

const char* kToy = "{\"id\":\"a\",\"tokens\":[1,2,3,4]}\n"
                   "{\"id\":\"b\",\"tokens\":[3,4,5,6]}\n"
                   "{\"id\":\"c\",\"tokens\":[10,11,12]}\n";

} // namespace

TEST_F(Cli, PlanFractionalKappa) {
    const CliRun r = run("plan --n 1000000 --p1 0.1 --p2 0.02 --format json");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = hllsh::json::parse(r.out);
    EXPECT_EQ(j.at("classic").at("num_low"), 10000);
    EXPECT_EQ(j.at("high_low").at("num_high"), 545);
    EXPECT_EQ(j.at("high_low").at("num_low"), 4546);
    EXPECT_NEAR(j.at("a_real").get<double>(), 6000.0 / 11.0, 1e-9);
    EXPECT_NEAR(j.at("savings_factor").get<double>(), std::pow(0.1, -j.at("rho").get<double>()), 1e-9);
}

TEST_F(Cli, PlanAlphaZeroGivesIdenticalLayouts) {
    const CliRun r = run("plan --n 1000000 --p1 0.1 --p2 0.01 --format json");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = hllsh::json::parse(r.out);
    EXPECT_EQ(j.at("classic").at("num_low"), j.at("high_low").at("num_low"));
    EXPECT_EQ(j.at("high_low").at("num_high"), 0);
    EXPECT_EQ(j.at("classic").at("low_len"), j.at("high_low").at("low_len"));
}

TEST_F(Cli, PlanExponentFlags) {
    const CliRun r = run("plan --n 16777216 --p1-exp 0.25 --p2-exp 0.3 --format json");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = hllsh::json::parse(r.out);
    EXPECT_NEAR(j.at("rho").get<double>(), 5.0 / 6.0, 1e-12);
}

TEST_F(Cli, PlanRejectsInvalidParameters) {
    const CliRun swapped = run("plan --n 1000 --p1 0.02 --p2 0.1");
    EXPECT_EQ(swapped.code, 2);
    EXPECT_NE(swapped.err.find("p1 <= p2"), std::string::npos) << swapped.err;
    const CliRun small = run("plan --n 1000 --p1 0.5 --p2 0.0001");
    EXPECT_EQ(small.code, 2);
    EXPECT_NE(small.err.find("p2 <= 1/n"), std::string::npos) << small.err;
    EXPECT_EQ(run("plan --p1 0.5 --p2 0.1").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("plan --n 100 --p1 0.5 --p2 0.1 --format yaml").code, 2);
}

TEST_F(Cli, BuildAndQueryToySet) {
    write("toy.jsonl", kToy);
    write("q.jsonl", "{\"id\":\"q1\",\"tokens\":[1,2,3,4]}\n{\"id\":\"q2\",\"tokens\":[100,200]}\n");
    const CliRun b = run("build --input " + path("toy.jsonl") + " --n 100 --p1 0.6 --p2 0.2 --out " +
                      path("toy.idx") + " --format json");
    ASSERT_EQ(b.code, 0) << b.err;
    const auto stats = hllsh::json::parse(b.out);
    EXPECT_EQ(stats.at("points"), 3);
    EXPECT_EQ(stats.at("stored_ids").get<std::uint64_t>(),
              3 * stats.at("tables_per_repetition").get<std::uint64_t>() *
                  stats.at("repetitions").get<std::uint64_t>());
    EXPECT_NE(b.err.find("seed: 1"), std::string::npos);

    const CliRun q = run("query --index " + path("toy.idx") + " --queries " + path("q.jsonl"));
    ASSERT_EQ(q.code, 0) << q.err;
    std::istringstream lines(q.out);
    std::string l1, l2;
    std::getline(lines, l1);
    std::getline(lines, l2);
    const auto r1 = hllsh::json::parse(l1);
    const auto r2 = hllsh::json::parse(l2);
    EXPECT_EQ(r1.at("outcome"), "Found");
    EXPECT_EQ(r1.at("id"), "a");
    EXPECT_EQ(r1.at("distance"), 0.0);
    EXPECT_EQ(r2.at("outcome"), "NotFound");
}

TEST_F(Cli, RebuildIsByteIdentical) {
    write("toy.jsonl", kToy);
    const std::string base = "build --input " + path("toy.jsonl") + " --n 100 --p1 0.6 --p2 0.2 --seed 5 ";
    ASSERT_EQ(run(base + "--threads 1 --out " + path("a.idx")).code, 0);
    ASSERT_EQ(run(base + "--threads 4 --out " + path("b.idx")).code, 0);
    EXPECT_EQ(slurp(path("a.idx")), slurp(path("b.idx")));
    ASSERT_EQ(run("build --input " + path("toy.jsonl") + " --n 100 --p1 0.6 --p2 0.2 --seed 6 --out " +
                  path("c.idx")).code,
              0);
    EXPECT_NE(slurp(path("a.idx")), slurp(path("c.idx")));
}

TEST_F(Cli, BuildReportsBadLine) {
    write("bad.jsonl", "{\"id\":\"a\",\"tokens\":[1,2]}\n{\"id\":\"b\",\"tokens\":[]}\n");
    const CliRun r = run("build --input " + path("bad.jsonl") + " --n 100 --p1 0.6 --p2 0.2 --out " + path("x.idx"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, BuildCapacityIsResourceError) {
    write("toy.jsonl", kToy);
    const CliRun r = run("build --input " + path("toy.jsonl") + " --n 2 --p1 0.9 --p2 0.6 --out " + path("x.idx"));
    EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, QueryEmptyIndexAndKindMismatch) {
    write("empty.jsonl", "");
    write("q.jsonl", "{\"id\":\"q1\",\"tokens\":[1,2,3,4]}\n");
    write("qv.jsonl", "{\"id\":\"q1\",\"vec\":[1,0]}\n");
    ASSERT_EQ(run("build --input " + path("empty.jsonl") + " --n 100 --p1 0.6 --p2 0.2 --out " + path("e.idx")).code,
              0);
    const CliRun q = run("query --index " + path("e.idx") + " --queries " + path("q.jsonl"));
    ASSERT_EQ(q.code, 0) << q.err;
    EXPECT_EQ(hllsh::json::parse(q.out).at("outcome"), "NotFound");
    EXPECT_EQ(run("query --index " + path("e.idx") + " --queries " + path("qv.jsonl")).code, 2);
    EXPECT_EQ(run("query --index " + path("e.idx") + " --queries " + path("q.jsonl") + " --family hyperplane").code,
              2);
    EXPECT_EQ(run("query --index " + path("missing.idx") + " --queries " + path("q.jsonl")).code, 2);
}

TEST_F(Cli, VerifyExitCodesAndCsv) {
    EXPECT_EQ(run("verify --samples 50").code, 2);
    const CliRun r = run("verify --samples 1000 --seed 3 --csv " + path("t.csv"));
    EXPECT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(path("t.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')).find("max_ratio") != std::string::npos, true);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    EXPECT_EQ(lines, 1001u);
}

TEST_F(Cli, SavingsGridDefaultHasReferenceCell) {
    const CliRun r = run("savings-grid");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\n0.25,0.333333333333,true,true,0.75,1,0.8125,0.1875,"), std::string::npos);

    const CliRun j = run("savings-grid --format json");
    ASSERT_EQ(j.code, 0);
    const auto arr = hllsh::json::parse(j.out);
    std::size_t csv_rows = 0;
    for (char c : r.out) csv_rows += c == '\n';
    EXPECT_EQ(arr.size() + 1, csv_rows);
}

TEST_F(Cli, OutputFlagAndDeterminism) {
    ASSERT_EQ(run("savings-grid --output " + path("a.csv")).code, 0);
    ASSERT_EQ(run("--output " + path("b.csv") + " savings-grid").code, 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    EXPECT_FALSE(slurp(path("a.csv")).empty());
}

TEST_F(Cli, BenchIsDeterministicWithoutTiming) {
    const std::string args = "bench --n 128 --trials 100 --repetitions 2 --no-timing --seed 11 --format json";
    const CliRun a = run(args + " --threads 1");
    const CliRun b = run(args + " --threads 2");
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.err.find("seed: 11"), std::string::npos);
    const auto j = hllsh::json::parse(a.out);
    EXPECT_EQ(j.at("incorrect_found"), 0);
    EXPECT_EQ(run("bench --trials 10").code, 2);
}

TEST_F(Cli, ThreadsFlagValidated) {
    EXPECT_EQ(run("bench --n 128 --trials 100 --repetitions 1 --threads zero").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}
