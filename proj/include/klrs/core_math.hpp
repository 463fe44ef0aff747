#pragma once

#include <cstdint>
#include <vector>

#include "klrs/errors.hpp"

namespace klrs {

/// Probability vector: entries >= 0, summing to 1 within 1e-12.
struct DiscreteDistribution {
    std::vector<double> probs;

    explicit DiscreteDistribution(std::vector<double> p);

    static DiscreteDistribution uniform(std::size_t n);
    // Normalizes nonnegative weights with positive total.
    static DiscreteDistribution from_weights(const std::vector<double>& w);

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

/// Per-sample losses with an optional weighting (uniform when absent).
struct LossVector {
    std::vector<double> losses;
    std::vector<double> weights;  // empty means uniform 1/N

    explicit LossVector(std::vector<double> l);
    LossVector(std::vector<double> l, DiscreteDistribution w);

    std::size_t size() const { return losses.size(); }
    double weight(std::size_t i) const;
    double weighted_mean() const;
    double weighted_variance() const;
    double max_loss() const;
};

/// Tilt parameters: fragility lambda > 0 and target tau (loss units).
struct TiltConfig {
    double lambda;
    double tau;
};

/// Tilted risk lambda * log E[exp(l/lambda)], max-shifted log-sum-exp.
/// Overflow-free for |l_i|/lambda up to about 1e6; lies in [weighted mean, max].
double tilted_risk(const LossVector& lv, double lambda);

/// Per-sample surrogate f_i = exp((l_i - tau)/lambda).
/// Individual entries overflow past (l_i - tau)/lambda > ~709; use
/// surrogate_mean for an overflow-safe aggregate.
std::vector<double> normalized_surrogate(const LossVector& lv, const TiltConfig& cfg);

/// Weighted mean of the normalized surrogate, evaluated in log-space.
/// <= 1 exactly when tilted_risk(lv, lambda) <= tau.
double surrogate_mean(const LossVector& lv, const TiltConfig& cfg);

/// log of surrogate_mean; finite whenever losses are, so feasibility tests
/// compare against 0 without overflow.
double log_surrogate_mean(const LossVector& lv, const TiltConfig& cfg);

/// Worst-case distribution p_i proportional to w_i * exp(l_i/lambda).
DiscreteDistribution worst_case_weights(const LossVector& lv, double lambda);

/// Second-order approximation mean + variance/(2*lambda), accurate for large lambda.
double mean_variance_approx(const LossVector& lv, double lambda);

/// KL(q || p) with the 0*log 0 = 0 convention. q_i > 0 with p_i = 0 raises
/// AbsoluteContinuityError rather than returning +inf.
double kl_divergence(const DiscreteDistribution& q, const DiscreteDistribution& p);

/// Add-one smoothing (c_k + 1)/(N + K); every output entry strictly positive.
DiscreteDistribution laplace_smooth(const std::vector<std::int64_t>& counts);

}  // namespace klrs
