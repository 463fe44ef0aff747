#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "klrs/errors.hpp"
#include "klrs/experiments.hpp"

using namespace klrs;

namespace {

struct TempFile {
    std::string path;

    explicit TempFile(const std::string& name) : path("/tmp/klrs_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::vector<std::size_t> class_counts(const Dataset& d) {
    std::map<int, std::size_t> by_label;
    for (double l : d.labels) by_label[static_cast<int>(l)]++;
    std::vector<std::size_t> counts;
    for (const auto& [label, c] : by_label) counts.push_back(c);
    return counts;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
}

}  // namespace

TEST_CASE("two gaussian toy shape") {
    const Dataset d = gen_two_gaussian_toy(7);
    REQUIRE(d.n() == 100);
    REQUIRE(d.width() == 2);
    double mx0 = 0.0, my0 = 0.0, mx1 = 0.0, my1 = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(d.labels[i] == doctest::Approx(i < 80 ? 0.0 : 1.0));
        CHECK(d.group_ids[i] == (i < 80 ? 0 : 1));
        if (i < 80) {
            mx0 += d.features[i][0] / 80.0;
            my0 += d.features[i][1] / 80.0;
        } else {
            mx1 += d.features[i][0] / 20.0;
            my1 += d.features[i][1] / 20.0;
        }
    }
    CHECK(std::abs(mx0 + 1.0) < 0.25);
    CHECK(std::abs(my0 - 2.0) < 0.25);
    CHECK(std::abs(mx1 - 0.2) < 0.45);
    CHECK(std::abs(my1 - 0.2) < 0.45);

    // Seeds matter and are reproducible.
    const Dataset again = gen_two_gaussian_toy(7);
    CHECK(again.features[3][1] == d.features[3][1]);
    const Dataset other = gen_two_gaussian_toy(8);
    CHECK(other.features[3][1] != d.features[3][1]);
}

TEST_CASE("binary gaussian shape") {
    const Dataset d = gen_binary_gaussian(3, 30, 50, 2.0, 0.5);
    REQUIRE(d.n() == 80);
    REQUIRE(d.width() == 2);
    double mpos = 0.0, mneg = 0.0;
    for (std::size_t i = 0; i < 80; ++i) {
        CHECK(d.labels[i] == doctest::Approx(i < 30 ? 1.0 : 0.0));
        (i < 30 ? mpos : mneg) += d.features[i][0] / (i < 30 ? 30.0 : 50.0);
    }
    CHECK(std::abs(mpos - 2.0) < 0.5);
    CHECK(std::abs(mneg + 2.0) < 0.5);
}

TEST_CASE("label shift proportions") {
    CHECK(label_shift_proportions(0.2, 0.1) ==
          doctest::Approx(0.3952107063330914).epsilon(1e-12));
    CHECK(label_shift_proportions(0.35, 0.0) == doctest::Approx(0.35));

    std::mt19937_64 rng(97);
    std::uniform_real_distribution<double> ps(0.05, 0.8);
    for (int t = 0; t < 100; ++t) {
        const double p = ps(rng);
        const double kl_max = -std::log(p);
        const double target = std::uniform_real_distribution<double>(1e-4, 0.9 * kl_max)(rng);
        const double q = label_shift_proportions(p, target);
        CHECK(q > p);
        CHECK(q < 1.0);
        const double back =
            kl_divergence(DiscreteDistribution({q, 1.0 - q}), DiscreteDistribution({p, 1.0 - p}));
        CHECK(std::abs(back - target) < 1e-9);
    }

    CHECK_THROWS_AS(label_shift_proportions(0.2, -std::log(0.2)), UnreachableDivergenceError);
    CHECK_THROWS_AS(label_shift_proportions(0.2, 5.0), UnreachableDivergenceError);
    CHECK_THROWS_AS(label_shift_proportions(1.2, 0.1), std::invalid_argument);
}

TEST_CASE("long tail downsampling schedule") {
    Dataset d;
    const std::size_t per = 40;
    for (int c = 0; c < 6; ++c) {
        for (std::size_t i = 0; i < per; ++i) {
            d.features.push_back({static_cast<double>(c), static_cast<double>(i)});
            d.labels.push_back(static_cast<double>(c));
        }
    }
    const Dataset cut = long_tail_downsample(d, 0.05, 4);
    const auto counts = class_counts(cut);
    REQUIRE(counts.size() == 6);
    std::size_t total = 0;
    for (int c = 0; c < 6; ++c) {
        const auto expect = static_cast<std::size_t>(
            std::floor(40.0 * std::pow(0.05, static_cast<double>(c) / 5.0) + 1e-9));
        CHECK(counts[c] == expect);
        total += expect;
    }
    CHECK(cut.n() == total);
    CHECK(counts[0] == 40);
    CHECK(counts[5] == 2);

    // rho = 1 keeps everything.
    const Dataset full = long_tail_downsample(d, 1.0, 4);
    CHECK(full.n() == d.n());

    // Kept rows exist in the source and are not repeated.
    std::set<std::pair<double, double>> seen;
    for (const auto& row : cut.features) {
        CHECK(row[1] < static_cast<double>(per));
        CHECK(seen.insert({row[0], row[1]}).second);
    }

    CHECK_THROWS_AS(long_tail_downsample(d, 1e-9, 4), DegenerateClassError);
    CHECK_THROWS_AS(long_tail_downsample(d, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(long_tail_downsample(d, 1.5, 4), std::invalid_argument);
}

TEST_CASE("confusion counts and metrics") {
    const std::vector<double> scores{1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0};
    const std::vector<int> labels{1, 1, 1, 0, 0, 0, 0};
    const auto cc = confusion_counts(scores, labels, 0.0);
    CHECK(cc.tp == 2);
    CHECK(cc.fn == 1);
    CHECK(cc.fp == 1);
    CHECK(cc.tn == 3);
    CHECK(cc.total() == 7);

    const auto m = metrics_from_scores(scores, labels, 0.0, 0.9);
    CHECK(m.acc == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(m.acc_pos == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.acc_neg == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.mcc == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("mcc is symmetric under class swap") {
    const std::vector<double> scores{0.4, -0.2, 0.9, -0.8, 0.1, -0.4};
    const std::vector<int> labels{1, 1, 0, 0, 1, 0};
    std::vector<double> flipped_scores;
    std::vector<int> flipped_labels;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        flipped_scores.push_back(-scores[i]);
        flipped_labels.push_back(1 - labels[i]);
    }
    const auto a = metrics_from_scores(scores, labels, 0.0, 0.9);
    // Swapping classes and negating scores moves the threshold boundary from
    // >= to <=, so nudge it below zero to keep the same partition.
    const auto b = metrics_from_scores(flipped_scores, flipped_labels, -1e-9, 0.9);
    CHECK(a.mcc == doctest::Approx(b.mcc).epsilon(1e-12));
    CHECK(a.acc == doctest::Approx(b.acc).epsilon(1e-12));
}

TEST_CASE("rank error tail statistics") {
    // One positive at 0 against negatives at 1..10: the pairwise errors are
    // exactly 1..10.
    std::vector<double> scores{0.0};
    std::vector<int> labels{1};
    for (int i = 1; i <= 10; ++i) {
        scores.push_back(static_cast<double>(i));
        labels.push_back(0);
    }
    const auto m = metrics_from_scores(scores, labels, 0.0, 0.9);
    CHECK(m.rank_error_var == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(m.rank_error_cvar == doctest::Approx(9.5).epsilon(1e-12));

    const auto half = metrics_from_scores(scores, labels, 0.0, 0.5);
    CHECK(half.rank_error_var == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(half.rank_error_cvar == doctest::Approx(7.5).epsilon(1e-12));

    CHECK_THROWS_AS(metrics_from_scores({1.0}, {1}, 0.0, 0.9), std::invalid_argument);
}

TEST_CASE("erm loss stats and tau selection") {
    const auto stats = erm_loss_stats({1.0, 2.0, 3.0, 6.0});
    CHECK(stats.mean == doctest::Approx(3.0));
    CHECK(stats.min == doctest::Approx(1.0));
    CHECK(stats.max == doctest::Approx(6.0));
    CHECK(stats.var == doctest::Approx(3.5));

    CHECK(select_tau(TauStrategy::kScaleErm, 1.3, stats) == doctest::Approx(3.9).epsilon(1e-12));
    CHECK(select_tau(TauStrategy::kMinmaxMix, 0.6, stats) ==
          doctest::Approx(0.6 * 6.0 + 0.4 * 1.0).epsilon(1e-12));
    CHECK(select_tau(TauStrategy::kMeanPlusVar, 0.5, stats) ==
          doctest::Approx(3.0 + 0.5 * 3.5).epsilon(1e-12));

    CHECK_THROWS_AS(select_tau(TauStrategy::kScaleErm, 0.9, stats), std::invalid_argument);
    CHECK_THROWS_AS(select_tau(TauStrategy::kMeanPlusVar, -0.1, stats), std::invalid_argument);
    // A mix that lands at or below the mean cannot be satisfied.
    CHECK_THROWS_AS(select_tau(TauStrategy::kMinmaxMix, 0.2, stats), InfeasibleTargetError);
    CHECK_THROWS_AS(erm_loss_stats({}), std::invalid_argument);
}

TEST_CASE("fair pca on identical groups is exact") {
    const Matrix g = from_rows({{2.0, 0.1}, {-2.0, -0.1}, {1.8, 0.0}, {-1.9, 0.1}});
    FairPcaConfig cfg;
    cfg.steps = 60;
    const auto res = fair_pca_run({g, g}, 1, 0.5, cfg);
    REQUIRE(res.group_losses.size() == 2);
    CHECK(res.group_losses[0] == doctest::Approx(res.group_losses[1]).epsilon(1e-8));
    // Identical groups make the pooled principal direction optimal for both.
    CHECK(res.group_losses[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    REQUIRE(res.u.rows == 2);
    REQUIRE(res.u.cols == 1);
    CHECK(res.u(0, 0) * res.u(0, 0) + res.u(1, 0) * res.u(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("fair pca ratio trades the gap against the average") {
    // Majority group stretched along x, minority along y.
    std::vector<std::vector<double>> a, b;
    for (int i = 0; i < 30; ++i) {
        const double t = (i - 14.5) / 14.5;
        a.push_back({2.0 * t, 0.05 * (i % 3 - 1)});
    }
    for (int i = 0; i < 10; ++i) {
        const double t = (i - 4.5) / 4.5;
        b.push_back({0.05 * (i % 3 - 1), 1.5 * t});
    }
    const std::vector<Matrix> groups{from_rows(a), from_rows(b)};
    FairPcaConfig cfg;
    cfg.steps = 200;

    // High ratio puts tau near the worst group's pooled loss, forcing a small
    // lambda whose tilt concentrates on the max: group losses equalize at the
    // price of the average. Low ratio needs a big lambda and optimizes the mean.
    const auto mean_focused = fair_pca_run(groups, 1, 0.1, cfg);
    const auto max_focused = fair_pca_run(groups, 1, 0.9, cfg);
    const auto gap = [](const FairPcaResult& r) {
        double lo = r.group_losses[0], hi = r.group_losses[0];
        for (double v : r.group_losses) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return hi - lo;
    };
    const auto avg = [](const FairPcaResult& r) {
        double s = 0.0;
        for (double v : r.group_losses) s += v;
        return s / static_cast<double>(r.group_losses.size());
    };
    CHECK(gap(max_focused) <= gap(mean_focused) + 1e-9);
    CHECK(avg(max_focused) >= avg(mean_focused) - 1e-9);
    CHECK(mean_focused.tau <= max_focused.tau + 1e-12);
    CHECK(max_focused.lambda_star <= mean_focused.lambda_star + 1e-9);
}

TEST_CASE("csv round trip") {
    TempFile tmp("roundtrip.csv");
    Dataset d;
    d.features = {{1.5, -2.25}, {0.0, 3.125}, {-4.75, 0.5}};
    d.labels = {1.0, 0.0, 1.0};
    d.group_ids = {0, 1, 0};
    const CsvSchema schema = CsvSchema::defaults_for(d);
    write_csv_dataset(tmp.path, d, schema);
    const Dataset back = load_csv_dataset(tmp.path, schema);
    REQUIRE(back.n() == 3);
    REQUIRE(back.width() == 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.features[i][0] == d.features[i][0]);
        CHECK(back.features[i][1] == d.features[i][1]);
        CHECK(back.labels[i] == d.labels[i]);
        CHECK(back.group_ids[i] == d.group_ids[i]);
    }
}

TEST_CASE("csv loader errors") {
    CsvSchema schema;
    schema.feature_columns = {"x0", "x1"};
    schema.label_column = "y";

    TempFile missing("missing_col.csv");
    write_text(missing.path, "x0,y\n1.0,1\n");
    CHECK_THROWS_AS(load_csv_dataset(missing.path, schema), ParseError);

    TempFile ragged("ragged.csv");
    write_text(ragged.path, "x0,x1,y\n1.0,2.0,1\n3.0,1\n");
    CHECK_THROWS_AS(load_csv_dataset(ragged.path, schema), ParseError);

    TempFile badfield("badfield.csv");
    write_text(badfield.path, "x0,x1,y\n1.0,zap,1\n");
    CHECK_THROWS_AS(load_csv_dataset(badfield.path, schema), ParseError);

    TempFile empty("empty.csv");
    write_text(empty.path, "x0,x1,y\n");
    CHECK_THROWS_AS(load_csv_dataset(empty.path, schema), ParseError);

    CHECK_THROWS_AS(load_csv_dataset("/nonexistent/nope.csv", schema), ParseError);

    // The line number lands in the message.
    try {
        load_csv_dataset(badfield.path, schema);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

TEST_CASE("report rendering") {
    Report rep;
    rep.config["model"] = std::string("point");
    rep.config["tau"] = 1.5;
    rep.config["sgd_steps"] = std::uint64_t{2000};
    rep.config["warm_start"] = true;
    rep.trace.push_back({1.0, 0.93, true});
    rep.trace.push_back({0.5, 1.21, false});
    rep.result.theta = {0.25, -0.75};
    rep.result.lambda1 = 0.625;
    rep.metrics["acc"] = 0.9;

    const std::string j = render_report(rep, "json");
    const auto parsed = nlohmann::json::parse(j);
    CHECK(parsed["config"]["model"] == "point");
    CHECK(parsed["config"]["tau"] == 1.5);
    CHECK(parsed["config"]["sgd_steps"] == 2000);
    CHECK(parsed["config"]["warm_start"] == true);
    CHECK(parsed["trace"].size() == 2);
    CHECK(parsed["trace"][0]["lambda"] == 1.0);
    CHECK(parsed["trace"][1]["feasible"] == false);
    CHECK(parsed["result"]["theta"][1] == -0.75);
    CHECK(parsed["result"]["lambda1"] == 0.625);
    CHECK(parsed["metrics"]["acc"] == 0.9);
    CHECK_FALSE(parsed.contains("guarantees"));
    CHECK(j.back() == '\n');

    const std::string c = render_report(rep, "csv");
    CHECK(c.rfind("lambda,objective,feasible\n", 0) == 0);
    CHECK(std::count(c.begin(), c.end(), '\n') == 3);

    CHECK_THROWS_AS(render_report(rep, "yaml"), std::invalid_argument);

    TempFile out("report.json");
    emit_report(rep, "json", out.path);
    std::ifstream in(out.path);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body == j);
}
