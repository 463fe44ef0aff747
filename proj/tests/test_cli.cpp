#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace {

struct CmdResult {
    int status = -1;
    std::string out;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
    const char* bin = std::getenv("KLRS_CLI");
    if (!bin) FAIL("KLRS_CLI is not set");
    const std::string cmd = std::string(bin) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) FAIL("popen failed for: " << cmd);
    CmdResult res;
    char buf[4096];
    std::size_t got = 0;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) res.out.append(buf, got);
    const int rc = pclose(pipe);
    res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return res;
}

struct TempFile {
    std::string path;

    explicit TempFile(const std::string& name) : path("/tmp/klrs_cli_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

// Twelve rows, two features, binary label, two groups.
void write_fixture_csv(const std::string& path) {
    std::string body = "x0,x1,y,g\n";
    const double rows[12][4] = {
        {0.1, 1.9, 0, 0},  {-0.3, 2.2, 0, 0}, {0.4, 1.7, 0, 0}, {-0.1, 2.4, 0, 0},
        {0.2, 2.1, 0, 0},  {0.0, 1.8, 0, 0},  {2.1, -0.2, 1, 1}, {1.8, 0.1, 1, 1},
        {2.4, -0.4, 1, 1}, {1.9, 0.3, 1, 1},  {2.2, 0.0, 1, 1}, {2.0, -0.1, 1, 1}};
    for (const auto& r : rows) {
        body += std::to_string(r[0]) + "," + std::to_string(r[1]) + "," +
                std::to_string(static_cast<int>(r[2])) + "," +
                std::to_string(static_cast<int>(r[3])) + "\n";
    }
    write_text(path, body);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
    CHECK(run_cli("").status == 1);
    CHECK(run_cli("frobnicate").status == 1);
    CHECK(run_cli("--help").status == 0);
    for (const char* sub :
         {"solve", "hsolve", "fairpca", "labelshift", "longtail", "toy", "guarantees"}) {
        const auto res = run_cli(std::string(sub) + " --help");
        CHECK(res.status == 0);
    }
    const auto badflag = run_cli("toy --tau 1.0 --no-such-flag");
    CHECK(badflag.status == 1);
}

TEST_CASE("solve runs on a csv and reports the solution") {
    TempFile csv("fixture.csv");
    write_fixture_csv(csv.path);
    const auto res = run_cli("solve --data " + csv.path +
                             " --features x0 --features x1 --model point --tau 1.5"
                             " --sgd-steps 300 --seed 5");
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j["config"]["model"] == "point");
    CHECK(j["config"]["tau"] == 1.5);
    CHECK(j["result"]["theta"].size() == 2);
    const double lambda_star = j["result"]["lambda1"].get<double>();
    CHECK(lambda_star > 0.0);
    CHECK(j["metrics"]["lambda_star"] == lambda_star);
    CHECK(j["metrics"]["loss_mean"].get<double>() <= 1.5);
    CHECK(j["trace"].size() >= 1);
    bool any_feasible = false;
    for (const auto& e : j["trace"]) any_feasible |= e["feasible"].get<bool>();
    CHECK(any_feasible);
}

TEST_CASE("solve rejects bad invocations") {
    TempFile csv("fixture2.csv");
    write_fixture_csv(csv.path);
    CHECK(run_cli("solve --tau 1.0").status == 1);
    CHECK(run_cli("solve --data /nonexistent.csv --features x0 --tau 1.0").status == 1);
    CHECK(run_cli("solve --data " + csv.path + " --features x0 --tau 1.0 --model bogus").status ==
          1);
    const auto both = run_cli("solve --data " + csv.path +
                              " --features x0 --tau 1.0 --tau-rule scale_erm:1.2");
    CHECK(both.status == 1);
    const auto neither = run_cli("solve --data " + csv.path + " --features x0 --features x1" +
                                 " --sgd-steps 100");
    CHECK(neither.status == 1);
    CHECK(neither.out.find("--tau") != std::string::npos);
}

TEST_CASE("infeasible target exits 2") {
    TempFile csv("fixture3.csv");
    write_fixture_csv(csv.path);
    const auto res = run_cli("solve --data " + csv.path +
                             " --features x0 --features x1 --model point --tau 1e-9"
                             " --sgd-steps 200");
    CHECK(res.status == 2);
    CHECK(res.out.find("infeasible target") != std::string::npos);
}

TEST_CASE("tau rule flows through solve") {
    TempFile csv("fixture4.csv");
    write_fixture_csv(csv.path);
    const auto res = run_cli("solve --data " + csv.path +
                             " --features x0 --features x1 --model point"
                             " --tau-rule scale_erm:1.4 --sgd-steps 300 --seed 5");
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    const double tau = j["config"]["tau"].get<double>();
    CHECK(tau > 0.0);
    CHECK(j["metrics"]["loss_mean"].get<double>() < tau);
}

TEST_CASE("hsolve composes the two-level objective") {
    TempFile csv("fixture5.csv");
    write_fixture_csv(csv.path);
    const auto res = run_cli("hsolve --data " + csv.path +
                             " --features x0 --features x1 --group g --model point"
                             " --tau 2.2 --w 0.5 --sgd-steps 80 --m2 8 --epsilon 1e-2 --seed 3");
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    const double l1 = j["result"]["lambda1"].get<double>();
    const double l2 = j["result"]["lambda2"].get<double>();
    CHECK(l1 > 0.0);
    CHECK(l2 > 0.0);
    CHECK(j["metrics"]["objective"].get<double>() == doctest::Approx(l1 + 0.5 * l2).epsilon(1e-12));
    CHECK(j["metrics"]["groups"] == 2.0);
    CHECK(run_cli("hsolve --data " + csv.path + " --features x0 --tau 2.0").status == 1);
}

TEST_CASE("fairpca reports group losses and the gap") {
    TempFile csv("fixture6.csv");
    write_fixture_csv(csv.path);
    const auto res = run_cli("fairpca --data " + csv.path +
                             " --features x0 --features x1 --group g --dim 1 --ratio 0.7"
                             " --steps 80");
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j["result"]["theta"].size() == 2);
    CHECK(j["metrics"].contains("group_loss_0"));
    CHECK(j["metrics"].contains("group_loss_1"));
    const double gap = j["metrics"]["gap"].get<double>();
    const double g0 = j["metrics"]["group_loss_0"].get<double>();
    const double g1 = j["metrics"]["group_loss_1"].get<double>();
    CHECK(gap == doctest::Approx(std::abs(g0 - g1)).epsilon(1e-12));
    CHECK(j["metrics"]["avg_loss"].get<double>() >= -1e-12);
}

TEST_CASE("labelshift with zero divergence keeps the training share") {
    const auto res = run_cli("labelshift --target-kl 0 --train-size 300 --test-size 200"
                             " --sgd-steps 250 --seed 11");
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j["metrics"]["test_pos_share"].get<double>() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(j["metrics"]["train_pos_share"].get<double>() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(j["metrics"].contains("klrs_acc"));
    CHECK(j["metrics"].contains("erm_acc"));
    CHECK(j["metrics"].contains("klrs_rank_error_cvar"));
    CHECK(j["result"]["theta"].size() == 3);
}

TEST_CASE("longtail follows the geometric schedule") {
    TempFile outcsv("longtail_out.csv");
    const auto res = run_cli("longtail --classes 6 --per-class 40 --rho 0.05 --seed 2"
                             " --out-data " + outcsv.path);
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j["metrics"]["classes"] == 6.0);
    CHECK(j["metrics"]["largest_class"] == 40.0);
    CHECK(j["metrics"]["smallest_class"] == 2.0);
    CHECK(j["metrics"]["kept_total"] == 84.0);
    CHECK(j["metrics"]["class_size_1"] == 21.0);

    const std::string csv = read_file(outcsv.path);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 85);
    CHECK(csv.rfind("x0,x1,y\n", 0) == 0);

    CHECK(run_cli("longtail --rho 0").status == 1);
}

TEST_CASE("toy sweep emits one report per target") {
    const auto res = run_cli("toy --seed 23 --sgd-steps 200 --tau-sweep 2 --epsilon 1e-2");
    REQUIRE(res.status == 0);
    // Two concatenated JSON objects: split on the blank boundary between
    // "}\n{" and parse each.
    const auto split = res.out.find("\n{");
    REQUIRE(split != std::string::npos);
    const auto first = nlohmann::json::parse(res.out.substr(0, split + 1));
    const auto second = nlohmann::json::parse(res.out.substr(split + 1));
    CHECK(first["config"]["tau"].get<double>() < second["config"]["tau"].get<double>());
    for (const auto& j : {first, second}) {
        CHECK(j["metrics"]["minority_count"] == 20.0);
        CHECK(j["metrics"]["majority_count"] == 80.0);
        CHECK(j["metrics"]["minority_mass"].get<double>() >= 0.0);
        CHECK(j["metrics"]["minority_mass"].get<double>() <= 1.0);
    }
}

TEST_CASE("repeated runs are byte-identical") {
    const std::string cmd = "toy --seed 9 --tau 2.5 --sgd-steps 250 --batch-size 16";
    const auto a = run_cli(cmd);
    const auto b = run_cli(cmd);
    REQUIRE(a.status == 0);
    CHECK(a.out == b.out);

    const auto c = run_cli("labelshift --target-kl 0.05 --train-size 200 --test-size 100"
                           " --sgd-steps 150 --seed 4");
    const auto d = run_cli("labelshift --target-kl 0.05 --train-size 200 --test-size 100"
                           " --sgd-steps 150 --seed 4");
    REQUIRE(c.status == 0);
    CHECK(c.out == d.out);
}

TEST_CASE("csv format emits the trace table") {
    const auto res = run_cli("toy --seed 3 --tau 2.4 --sgd-steps 150 --format csv");
    REQUIRE(res.status == 0);
    CHECK(res.out.rfind("lambda,objective,feasible\n", 0) == 0);
    CHECK(std::count(res.out.begin(), res.out.end(), '\n') >= 2);
}

TEST_CASE("guarantees pins its closed forms") {
    const auto tail = run_cli("guarantees --lambda 0.5 --alpha 0.35");
    REQUIRE(tail.status == 0);
    CHECK(tail.out == "tail_bound = 0.4965853037914095\n");

    const auto disc = run_cli("guarantees --k 2 --n 100 --r 0.05");
    REQUIRE(disc.status == 0);
    CHECK(disc.out.find("asymptotic_discrete = 0.99843459774") != std::string::npos);
    CHECK(disc.out.find("chernoff = 0.96487026842") != std::string::npos);

    const auto cont = run_cli("guarantees --c 1.0 --lambda 0.5 --n 1000 --r 0.05");
    REQUIRE(cont.status == 0);
    CHECK(cont.out.find("asymptotic_continuous = 0.00569232948") != std::string::npos);
    CHECK(cont.out.find("asymptotic_continuous_k = 71\n") != std::string::npos);

    CHECK(run_cli("guarantees").status == 1);
    CHECK(run_cli("guarantees --lambda 0.5").status == 1);
}

TEST_CASE("config file merges under flags") {
    TempFile cfg("config.json");
    write_text(cfg.path, "{\"lambda\": 0.5, \"alpha\": 0.35}\n");
    const auto base = run_cli("guarantees --config " + cfg.path);
    REQUIRE(base.status == 0);
    CHECK(base.out == "tail_bound = 0.4965853037914095\n");

    const auto override_flag = run_cli("guarantees --config " + cfg.path + " --alpha 0.7");
    REQUIRE(override_flag.status == 0);
    CHECK(override_flag.out == "tail_bound = 0.2465969639416065\n");

    TempFile bogus("bogus.json");
    write_text(bogus.path, "{\"lambda\": 0.5, \"alpha\": 0.35, \"bogus\": 1}\n");
    const auto bad = run_cli("guarantees --config " + bogus.path);
    CHECK(bad.status == 1);
    CHECK(bad.out.find("unknown config key 'bogus'") != std::string::npos);

    TempFile garbled("garbled.json");
    write_text(garbled.path, "not json at all\n");
    CHECK(run_cli("guarantees --config " + garbled.path).status == 1);
    CHECK(run_cli("guarantees --config /nonexistent.json --lambda 1 --alpha 1").status == 1);
}

TEST_CASE("reports write to --out") {
    TempFile out("report_out.json");
    const auto res = run_cli("guarantees --lambda 0.5 --alpha 0.35 --out " + out.path);
    REQUIRE(res.status == 0);
    const auto j = nlohmann::json::parse(read_file(out.path));
    CHECK(j["guarantees"]["tail_bound"].get<double>() == doctest::Approx(0.4965853037914095));
    CHECK(j["config"]["command"] == "guarantees");
}
