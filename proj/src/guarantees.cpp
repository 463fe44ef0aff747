#include "klrs/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "klrs/rng.hpp"

namespace klrs {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

constexpr int kGammaMaxIter = 300;
constexpr double kGammaTol = 1e-14;

// Series expansion of P(a, x); good for x < a + 1 territory.
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kGammaMaxIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaTol) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x); good for larger x.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kGammaTol) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double tail_bound(double lambda, double alpha) {
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
    return std::clamp(std::exp(-alpha / lambda), 0.0, 1.0);
}

double chi2_cdf(int dof, double y) {
    require(dof >= 1, "dof must be >= 1");
    require(std::isfinite(y) && y >= 0.0, "y must be >= 0");
    if (y == 0.0) return 0.0;
    const double a = 0.5 * static_cast<double>(dof);
    const double x = 0.5 * y;
    if (y < static_cast<double>(dof) + 1.0) {
        return std::clamp(gamma_p_series(a, x), 0.0, 1.0);
    }
    return std::clamp(1.0 - gamma_q_cf(a, x), 0.0, 1.0);
}

double asymptotic_discrete_confidence(int k, long long n, double r) {
    require(k >= 2, "K must be >= 2");
    require(n >= 1, "N must be >= 1");
    require(std::isfinite(r) && r >= 0.0, "r must be >= 0");
    return chi2_cdf(k - 1, 2.0 * static_cast<double>(n) * r);
}

ContinuousConfidence asymptotic_continuous_confidence(double c, double lambda, long long n,
                                                      double r, long long k_cap) {
    require(std::isfinite(c) && c > 0.0, "C must be positive");
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
    require(n >= 1, "N must be >= 1");
    require(std::isfinite(r) && r > 0.0, "r must be positive");
    if (k_cap <= 0) {
        const double guess = 10.0 * std::ceil(static_cast<double>(n) * c / (r * lambda));
        k_cap = static_cast<long long>(std::min(guess, 1e5));
    }
    k_cap = std::max<long long>(k_cap, 2);

    ContinuousConfidence best;
    const double nd = static_cast<double>(n);
    for (long long k = 2; k <= k_cap; ++k) {
        const double y = 2.0 * nd * r - 2.0 * nd * c / (static_cast<double>(k) * lambda);
        if (y <= 0.0) continue;
        const double v = chi2_cdf(static_cast<int>(k - 1), y);
        if (v > best.value) {
            best.value = v;
            best.k_star = k;
        }
    }
    return best;
}

double chernoff_confidence(int k, long long n, double r) {
    require(k >= 2, "K must be >= 2");
    require(n >= 1, "N must be >= 1");
    require(std::isfinite(r) && r >= 0.0, "r must be >= 0");
    const double m = 2.0 * static_cast<double>(n) * r / static_cast<double>(k - 1);
    if (m <= 1.0) return 0.0;  // bound vacuous below m = 1
    const double base = m * std::exp(1.0 - m);
    const double v = 1.0 - std::pow(base, 0.5 * static_cast<double>(k - 1));
    return std::clamp(v, 0.0, 1.0);
}

long long chernoff_required_n(int k, double r, double target) {
    require(k >= 2, "K must be >= 2");
    require(std::isfinite(r) && r > 0.0, "r must be positive");
    require(target >= 0.0 && target < 1.0, "target must be in [0, 1)");
    long long hi = 1;
    while (chernoff_confidence(k, hi, r) < target) {
        hi *= 2;
        require(hi < (1LL << 62), "target confidence unreachable");
    }
    long long lo = hi / 2;
    while (lo + 1 < hi) {
        const long long mid = lo + (hi - lo) / 2;
        if (chernoff_confidence(k, mid, r) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

double finite_sample_radius(int k, long long n, double delta, double expected_kl) {
    require(k >= 1, "K must be >= 1");
    require(n >= 1, "N must be >= 1");
    require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
    require(std::isfinite(expected_kl) && expected_kl >= 0.0, "expected_kl must be >= 0");
    const double kd = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    const double lg = std::log(4.0 * kd / delta);
    const double lg5 = lg * lg * lg * lg * lg;
    return expected_kl + (6.0 * std::sqrt(kd * lg5) + 311.0) / nd + 160.0 * kd / std::pow(nd, 1.5);
}

namespace {

std::vector<std::int64_t> draw_counts(const DiscreteDistribution& p, int n, std::mt19937_64& rng) {
    std::vector<double> cum(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        cum[i] = acc;
    }
    std::vector<std::int64_t> counts(p.size(), 0);
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(rng);
        const std::size_t j = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        ++counts[std::min(j, p.size() - 1)];
    }
    return counts;
}

}  // namespace

double monte_carlo_expected_kl(const DiscreteDistribution& p_true, int n, int trials,
                               std::uint64_t seed) {
    require(n >= 1, "N must be >= 1");
    require(trials >= 1, "trials must be >= 1");
    double sum = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng = seeded_engine(seed, static_cast<std::uint64_t>(t));
        const auto counts = draw_counts(p_true, n, rng);
        sum += kl_divergence(p_true, laplace_smooth(counts));
    }
    return sum / static_cast<double>(trials);
}

double validate_asymptotic_coverage(const DiscreteDistribution& p_true, int n, double r,
                                    int trials, std::uint64_t seed) {
    require(n >= 1, "N must be >= 1");
    require(trials >= 1, "trials must be >= 1");
    require(std::isfinite(r) && r >= 0.0, "r must be >= 0");
    for (std::size_t i = 0; i < p_true.size(); ++i) {
        require(p_true[i] > 0.0, "p_true entries must all be positive");
    }
    int covered = 0;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng = seeded_engine(seed, static_cast<std::uint64_t>(t));
        const auto counts = draw_counts(p_true, n, rng);
        double kl = 0.0;
        bool supported = true;
        for (std::size_t i = 0; i < p_true.size(); ++i) {
            if (counts[i] == 0) {
                supported = false;
                break;
            }
            const double phat = static_cast<double>(counts[i]) / static_cast<double>(n);
            kl += p_true[i] * std::log(p_true[i] / phat);
        }
        if (supported && kl <= r) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(trials);
}

}  // namespace klrs
