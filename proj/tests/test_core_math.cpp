#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "klrs/core_math.hpp"

using namespace klrs;

namespace {

std::vector<double> random_losses(std::mt19937_64& rng, std::size_t n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> l(n);
    for (auto& x : l) x = u(rng);
    return l;
}

// Brute-force sup over the simplex of E_Q[l] - lambda * KL(Q || P) for N = 2.
double dual_sup_two(const std::vector<double>& l, double lambda) {
    double best = -1e300;
    for (int i = 0; i <= 100000; ++i) {
        const double q = static_cast<double>(i) / 100000.0;
        double val = q * l[0] + (1.0 - q) * l[1];
        if (q > 0.0) val -= lambda * q * std::log(q / 0.5);
        if (q < 1.0) val -= lambda * (1.0 - q) * std::log((1.0 - q) / 0.5);
        best = std::max(best, val);
    }
    return best;
}

}  // namespace

TEST_CASE("tilted risk closed-form values") {
    const LossVector lv({0.0, 1.0});
    CHECK(tilted_risk(lv, 1.0) == doctest::Approx(0.62011450695827752).epsilon(1e-14));
    CHECK(tilted_risk(lv, 1000.0) == doctest::Approx(0.500124999994791667).epsilon(1e-12));
    CHECK(tilted_risk(lv, 0.5) == doctest::Approx(0.71689041524151359).epsilon(1e-13));
}

TEST_CASE("tilted risk constant losses collapse to the constant") {
    const LossVector lv({2.5, 2.5, 2.5});
    for (double lam : {1e-3, 1.0, 1e4}) {
        CHECK(tilted_risk(lv, lam) == doctest::Approx(2.5).epsilon(1e-12));
    }
}

TEST_CASE("tilted risk respects mean and max bounds") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 200; ++t) {
        const LossVector lv(random_losses(rng, 1 + t % 17, 50.0));
        const double lam = std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
        const double tr = tilted_risk(lv, lam);
        CHECK(tr >= lv.weighted_mean() - 1e-9);
        CHECK(tr <= lv.max_loss() + 1e-9);
    }
}

TEST_CASE("tilted risk is non-increasing in lambda") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 1000; ++t) {
        const LossVector lv(random_losses(rng, 2 + t % 9, 10.0));
        double prev = tilted_risk(lv, 1e-2);
        for (double lam = 2e-2; lam < 1e3; lam *= 2.7) {
            const double cur = tilted_risk(lv, lam);
            CHECK(cur <= prev + 1e-10);
            prev = cur;
        }
    }
}

TEST_CASE("tilted risk limits") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        const auto losses = random_losses(rng, 5, 2.0);
        const LossVector lv(losses);
        const double n = static_cast<double>(losses.size());
        CHECK(tilted_risk(lv, 1e-3) >= lv.max_loss() - 1e-3 * std::log(n) - 1e-12);
        CHECK(tilted_risk(lv, 1e-3) <= lv.max_loss() + 1e-12);
        const double approx = lv.weighted_mean() + lv.weighted_variance() / (2e4);
        CHECK(tilted_risk(lv, 1e4) == doctest::Approx(approx).epsilon(1e-6));
    }
}

TEST_CASE("tilted risk shift equivariance") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 100; ++t) {
        const auto losses = random_losses(rng, 6, 5.0);
        auto shifted = losses;
        const double c = std::uniform_real_distribution<double>(-20, 20)(rng);
        for (auto& x : shifted) x += c;
        const double lam = std::exp(std::uniform_real_distribution<double>(-2, 2)(rng));
        CHECK(tilted_risk(LossVector(shifted), lam) ==
              doctest::Approx(tilted_risk(LossVector(losses), lam) + c).epsilon(1e-10));
    }
}

TEST_CASE("tilted risk survives extreme loss scales") {
    const LossVector lv({0.0, 1e6});
    const double tr = tilted_risk(lv, 1.0);
    CHECK(std::isfinite(tr));
    CHECK(tr == doctest::Approx(1e6 - std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("tilted risk matches the dual supremum") {
    std::mt19937_64 rng(19);
    for (int t = 0; t < 10; ++t) {
        const auto losses = random_losses(rng, 2, 3.0);
        const double lam = std::exp(std::uniform_real_distribution<double>(-1, 1)(rng));
        CHECK(tilted_risk(LossVector(losses), lam) ==
              doctest::Approx(dual_sup_two(losses, lam)).epsilon(1e-7));
    }
}

TEST_CASE("tilted risk rejects bad lambda") {
    const LossVector lv({0.0, 1.0});
    CHECK_THROWS_AS(tilted_risk(lv, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(tilted_risk(lv, -1.0), std::invalid_argument);
}

TEST_CASE("surrogate mean closed form and feasibility equivalence") {
    const LossVector lv({0.0, 1.0});
    CHECK(surrogate_mean(lv, {1.0, 1.0}) ==
          doctest::Approx((std::exp(-1.0) + 1.0) / 2.0).epsilon(1e-14));
    CHECK(surrogate_mean(lv, {1.0, 0.7}) ==
          doctest::Approx(std::exp(-0.7) * (1.0 + std::exp(1.0)) / 2.0).epsilon(1e-14));

    std::mt19937_64 rng(23);
    for (int t = 0; t < 300; ++t) {
        const LossVector rv(random_losses(rng, 2 + t % 7, 4.0));
        const double lam = std::exp(std::uniform_real_distribution<double>(-2, 2)(rng));
        const double tau = std::uniform_real_distribution<double>(-5, 5)(rng);
        const bool by_mean = surrogate_mean(rv, {lam, tau}) <= 1.0;
        const bool by_risk = tilted_risk(rv, lam) <= tau;
        CHECK(by_mean == by_risk);
        CHECK(log_surrogate_mean(rv, {lam, tau}) ==
              doctest::Approx(std::log(surrogate_mean(rv, {lam, tau}))).epsilon(1e-10));
    }
}

TEST_CASE("surrogate mean stays finite where naive exponentials overflow") {
    const LossVector lv({0.0, 5000.0});
    const double sm = surrogate_mean(lv, {1.0, 5000.0});
    CHECK(std::isfinite(sm));
    CHECK(sm == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::isfinite(log_surrogate_mean(lv, {1.0, 0.0})));
}

TEST_CASE("normalized surrogate entries") {
    const LossVector lv({0.0, 1.0, 2.0});
    const auto f = normalized_surrogate(lv, {2.0, 1.0});
    REQUIRE(f.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(f[i] == doctest::Approx(std::exp((static_cast<double>(i) - 1.0) / 2.0)));
    }
}

TEST_CASE("worst case weights match direct softmax") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 100; ++t) {
        const auto losses = random_losses(rng, 3 + t % 5, 6.0);
        const double lam = std::exp(std::uniform_real_distribution<double>(-1.5, 1.5)(rng));
        const auto w = worst_case_weights(LossVector(losses), lam);
        double z = 0.0;
        const double mx = *std::max_element(losses.begin(), losses.end());
        for (double l : losses) z += std::exp((l - mx) / lam);
        double sum = 0.0;
        for (std::size_t i = 0; i < losses.size(); ++i) {
            CHECK(w[i] == doctest::Approx(std::exp((losses[i] - mx) / lam) / z).epsilon(1e-12));
            sum += w[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("worst case weights order follows losses") {
    const auto w = worst_case_weights(LossVector({1.0, 3.0, 2.0}), 0.7);
    CHECK(w[1] > w[2]);
    CHECK(w[2] > w[0]);
}

TEST_CASE("worst case weights respect base weighting") {
    const LossVector lv({1.0, 1.0}, DiscreteDistribution({0.25, 0.75}));
    const auto w = worst_case_weights(lv, 1.0);
    CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("mean variance approx formula") {
    const LossVector lv({0.0, 1.0, 2.0, 5.0});
    const double lam = 7.0;
    CHECK(mean_variance_approx(lv, lam) ==
          doctest::Approx(lv.weighted_mean() + lv.weighted_variance() / (2.0 * lam))
              .epsilon(1e-14));
}

TEST_CASE("kl divergence values and edge cases") {
    CHECK(kl_divergence(DiscreteDistribution({0.5, 0.5}), DiscreteDistribution({0.25, 0.75})) ==
          doctest::Approx(0.14384103622589046).epsilon(1e-14));
    CHECK(kl_divergence(DiscreteDistribution({1.0, 0.0}), DiscreteDistribution({0.5, 0.5})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    const DiscreteDistribution p({0.3, 0.7});
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
    CHECK(kl_divergence(DiscreteDistribution({0.0, 1.0}), DiscreteDistribution({0.5, 0.5})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(
        kl_divergence(DiscreteDistribution({0.5, 0.5}), DiscreteDistribution({1.0, 0.0})),
        AbsoluteContinuityError);
    CHECK_THROWS_AS(
        kl_divergence(DiscreteDistribution({0.5, 0.5}), DiscreteDistribution({0.3, 0.3, 0.4})),
        std::invalid_argument);
}

TEST_CASE("kl divergence is nonnegative") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(4), b(4);
        double sa = 0.0, sb = 0.0;
        for (int i = 0; i < 4; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
            sa += a[i];
            sb += b[i];
        }
        for (int i = 0; i < 4; ++i) {
            a[i] /= sa;
            b[i] /= sb;
        }
        CHECK(kl_divergence(DiscreteDistribution(a), DiscreteDistribution(b)) >= -1e-12);
    }
}

TEST_CASE("laplace smoothing") {
    const auto p = laplace_smooth({0, 1, 3});
    REQUIRE(p.size() == 3);
    CHECK(p[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(2.0 / 7.0).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(4.0 / 7.0).epsilon(1e-14));
    const auto z = laplace_smooth({0, 0});
    CHECK(z[0] == doctest::Approx(0.5));
    CHECK(z[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(laplace_smooth({-1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(laplace_smooth({}), std::invalid_argument);
}

TEST_CASE("distribution and loss vector validation") {
    CHECK_THROWS_AS(DiscreteDistribution({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteDistribution({-0.1, 1.1}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteDistribution({}), std::invalid_argument);
    CHECK_THROWS_AS(LossVector({}), std::invalid_argument);
    CHECK_THROWS_AS(LossVector({1.0, std::nan("")}), std::invalid_argument);

    const auto w = DiscreteDistribution::from_weights({2.0, 6.0});
    CHECK(w[0] == doctest::Approx(0.25));
    CHECK(w[1] == doctest::Approx(0.75));
    CHECK_THROWS_AS(DiscreteDistribution::from_weights({0.0, 0.0}), std::invalid_argument);

    const auto u = DiscreteDistribution::uniform(4);
    CHECK(u.size() == 4);
    CHECK(u[3] == doctest::Approx(0.25));
}

TEST_CASE("weighted statistics") {
    const LossVector lv({1.0, 3.0}, DiscreteDistribution({0.75, 0.25}));
    CHECK(lv.weighted_mean() == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(lv.weighted_variance() == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(lv.max_loss() == doctest::Approx(3.0));
    const LossVector uw({2.0, 4.0});
    CHECK(uw.weight(0) == doctest::Approx(0.5));
    CHECK(uw.weighted_mean() == doctest::Approx(3.0));
    CHECK(uw.weighted_variance() == doctest::Approx(1.0));
}
