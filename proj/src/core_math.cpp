#include "klrs/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace klrs {

namespace {

constexpr double kSumTol = 1e-12;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_positive_lambda(double lambda) {
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> p) : probs(std::move(p)) {
    require(!probs.empty(), "distribution must be nonempty");
    double sum = 0.0;
    for (double x : probs) {
        require(std::isfinite(x) && x >= 0.0, "probabilities must be finite and >= 0");
        sum += x;
    }
    require(std::abs(sum - 1.0) <= kSumTol, "probabilities must sum to 1 within 1e-12");
}

DiscreteDistribution DiscreteDistribution::uniform(std::size_t n) {
    require(n >= 1, "uniform distribution needs n >= 1");
    return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DiscreteDistribution DiscreteDistribution::from_weights(const std::vector<double>& w) {
    require(!w.empty(), "weights must be nonempty");
    double sum = 0.0;
    for (double x : w) {
        require(std::isfinite(x) && x >= 0.0, "weights must be finite and >= 0");
        sum += x;
    }
    require(sum > 0.0, "weights must have positive total");
    std::vector<double> p(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] / sum;
    return DiscreteDistribution(std::move(p));
}

LossVector::LossVector(std::vector<double> l) : losses(std::move(l)) {
    require(!losses.empty(), "losses must be nonempty");
    for (double x : losses) require(std::isfinite(x), "losses must be finite");
}

LossVector::LossVector(std::vector<double> l, DiscreteDistribution w)
    : losses(std::move(l)), weights(std::move(w.probs)) {
    require(!losses.empty(), "losses must be nonempty");
    for (double x : losses) require(std::isfinite(x), "losses must be finite");
    require(weights.size() == losses.size(), "weights length must match losses");
}

double LossVector::weight(std::size_t i) const {
    return weights.empty() ? 1.0 / static_cast<double>(losses.size()) : weights[i];
}

double LossVector::weighted_mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) m += weight(i) * losses[i];
    return m;
}

double LossVector::weighted_variance() const {
    const double m = weighted_mean();
    double v = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const double d = losses[i] - m;
        v += weight(i) * d * d;
    }
    return v;
}

double LossVector::max_loss() const {
    return *std::max_element(losses.begin(), losses.end());
}

namespace {

// log sum_i w_i * exp(x_i), max-shifted over entries with w_i > 0.
// Left-to-right reduction so results are bit-reproducible.
double log_weighted_sum_exp(const LossVector& lv, const std::vector<double>& x) {
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (lv.weight(i) > 0.0) shift = std::max(shift, x[i]);
    }
    if (!std::isfinite(shift)) throw std::invalid_argument("weights must have positive total");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = lv.weight(i);
        if (w > 0.0) sum += w * std::exp(x[i] - shift);
    }
    return shift + std::log(sum);
}

}  // namespace

double tilted_risk(const LossVector& lv, double lambda) {
    require_positive_lambda(lambda);
    std::vector<double> x(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) x[i] = lv.losses[i] / lambda;
    return lambda * log_weighted_sum_exp(lv, x);
}

std::vector<double> normalized_surrogate(const LossVector& lv, const TiltConfig& cfg) {
    require_positive_lambda(cfg.lambda);
    std::vector<double> f(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) {
        f[i] = std::exp((lv.losses[i] - cfg.tau) / cfg.lambda);
    }
    return f;
}

double log_surrogate_mean(const LossVector& lv, const TiltConfig& cfg) {
    require_positive_lambda(cfg.lambda);
    std::vector<double> x(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) {
        x[i] = (lv.losses[i] - cfg.tau) / cfg.lambda;
    }
    return log_weighted_sum_exp(lv, x);
}

double surrogate_mean(const LossVector& lv, const TiltConfig& cfg) {
    return std::exp(log_surrogate_mean(lv, cfg));
}

DiscreteDistribution worst_case_weights(const LossVector& lv, double lambda) {
    require_positive_lambda(lambda);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lv.size(); ++i) {
        if (lv.weight(i) > 0.0) shift = std::max(shift, lv.losses[i] / lambda);
    }
    if (!std::isfinite(shift)) throw std::invalid_argument("weights must have positive total");
    std::vector<double> t(lv.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const double w = lv.weight(i);
        if (w > 0.0) {
            t[i] = w * std::exp(lv.losses[i] / lambda - shift);
            sum += t[i];
        }
    }
    for (double& x : t) x /= sum;
    return DiscreteDistribution(std::move(t));
}

double mean_variance_approx(const LossVector& lv, double lambda) {
    require_positive_lambda(lambda);
    return lv.weighted_mean() + lv.weighted_variance() / (2.0 * lambda);
}

double kl_divergence(const DiscreteDistribution& q, const DiscreteDistribution& p) {
    require(q.size() == p.size(), "distributions must have equal length");
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] > 0.0) {
            if (p[i] <= 0.0) {
                throw AbsoluteContinuityError("kl_divergence: q has mass where p has none (index " +
                                              std::to_string(i) + ")");
            }
            sum += q[i] * std::log(q[i] / p[i]);
        }
    }
    return std::max(sum, 0.0);
}

DiscreteDistribution laplace_smooth(const std::vector<std::int64_t>& counts) {
    require(!counts.empty(), "counts must be nonempty");
    std::int64_t n = 0;
    for (std::int64_t c : counts) {
        require(c >= 0, "counts must be nonnegative");
        n += c;
    }
    const double denom = static_cast<double>(n) + static_cast<double>(counts.size());
    std::vector<double> p(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        p[i] = (static_cast<double>(counts[i]) + 1.0) / denom;
    }
    return DiscreteDistribution(std::move(p));
}

}  // namespace klrs
