#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "klrs/core_math.hpp"

namespace klrs {

/// One computed guarantee with the inputs that produced it.
struct GuaranteeReport {
    std::string kind;  // tail | asymptotic_discrete | asymptotic_continuous | chernoff | finite_sample
    std::map<std::string, double> inputs;
    double value = 0.0;
};

/// P(l >= tau + alpha) <= exp(-alpha/lambda), clamped to [0,1].
double tail_bound(double lambda, double alpha);

/// Regularized lower incomplete gamma P(dof/2, y/2): series for y < dof+1,
/// continued fraction otherwise; absolute error below 1e-10.
double chi2_cdf(int dof, double y);

/// chi2_cdf(K-1, 2*N*r): asymptotic confidence for discrete supports.
double asymptotic_discrete_confidence(int k, long long n, double r);

struct ContinuousConfidence {
    double value = 0.0;
    long long k_star = 2;  // the K attaining the max
};

/// max over K in [2, k_cap] of chi2_cdf(K-1, max(0, 2Nr - 2NC/(K*lambda))).
/// k_cap <= 0 picks the default 10*ceil(N*C/(r*lambda)) capped at 1e5.
ContinuousConfidence asymptotic_continuous_confidence(double c, double lambda, long long n,
                                                      double r, long long k_cap = 0);

/// 1 - (m*e^(1-m))^((K-1)/2) with m = 2Nr/(K-1), clamped to [0,1].
/// Vacuous for m <= 1: returns 0 there (the bound carries no information).
double chernoff_confidence(int k, long long n, double r);

/// Smallest N with chernoff_confidence(k, N, r) >= target (integer search).
long long chernoff_required_n(int k, double r, double target);

/// expected_kl + (6*sqrt(K*log^5(4K/delta)) + 311)/N + 160K/N^(3/2).
double finite_sample_radius(int k, long long n, double delta, double expected_kl);

/// Mean over trials of KL(p_true || laplace_smooth(counts of N draws)).
/// Per-trial RNG streams derive from (seed, trial): order-independent.
double monte_carlo_expected_kl(const DiscreteDistribution& p_true, int n, int trials,
                               std::uint64_t seed);

/// Fraction of trials with KL(p_true || empirical) <= r; trials where the
/// empirical distribution misses a support count as non-coverage.
double validate_asymptotic_coverage(const DiscreteDistribution& p_true, int n, double r,
                                    int trials, std::uint64_t seed);

}  // namespace klrs
