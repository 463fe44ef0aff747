#include "klrs/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "klrs/rng.hpp"

namespace klrs {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Exponent cap keeping exp() finite; the full-data verdict runs in log-space
// so the cap only tempers wildly infeasible SGD steps.
constexpr double kExpCap = 700.0;

double step_at(const SolverConfig& cfg, int t) {
    if (cfg.step_schedule == StepSchedule::kConstant) return cfg.step_size;
    const double t0 = std::max(1.0, static_cast<double>(cfg.sgd_steps) / 10.0);
    return cfg.step_size / (1.0 + static_cast<double>(t) / t0);
}

double lambda_floor(double tau) {
    return tau > 0.0 ? 1e-8 * tau : 1e-12;
}

bool finite_losses(const std::vector<double>& losses) {
    for (double l : losses) {
        if (!std::isfinite(l)) return false;
    }
    return true;
}

// Iterates this far out are numerical wreckage; reject the step before the
// losses themselves overflow.
bool theta_sane(const ParameterVector& theta) {
    for (double v : theta) {
        if (!std::isfinite(v) || std::abs(v) > 1e100) return false;
    }
    return true;
}

double full_surrogate_mean(const LossModel& model, const Dataset& data,
                           const ParameterVector& theta, double tau, double lambda) {
    const std::vector<double> losses = all_losses(model, theta, data);
    if (!finite_losses(losses)) return std::numeric_limits<double>::infinity();
    return surrogate_mean(LossVector(losses), TiltConfig{lambda, tau});
}

// Non-finite losses cannot certify feasibility and vote infeasible.
bool full_surrogate_feasible(const LossModel& model, const Dataset& data,
                             const ParameterVector& theta, double tau, double lambda,
                             double* mean_out) {
    const std::vector<double> losses = all_losses(model, theta, data);
    if (!finite_losses(losses)) {
        if (mean_out) *mean_out = std::numeric_limits<double>::infinity();
        return false;
    }
    const double log_mean = log_surrogate_mean(LossVector(losses), TiltConfig{lambda, tau});
    if (mean_out) *mean_out = std::exp(log_mean);
    return log_mean <= 0.0;
}

}  // namespace

void SolverConfig::validate() const {
    require(std::isfinite(tau), "tau must be finite");
    require(epsilon > 0.0, "epsilon must be positive");
    require(lambda_init > 0.0, "lambda_init must be positive");
    require(max_doublings >= 0, "max_doublings must be >= 0");
    require(sgd_steps >= 1, "sgd_steps must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(step_size > 0.0, "step_size must be positive");
}

FeasibilityResult feasibility_check(const LossModel& model, const Dataset& data, double lambda,
                                    const SolverConfig& cfg, const ParameterVector& theta_init,
                                    std::vector<double>* surrogate_trace) {
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
    cfg.validate();
    require(theta_init.size() == model.dim(), "theta_init has wrong dimension");

    ParameterVector theta = theta_init;
    const std::size_t n = data.n();
    // One stream per call keyed only by the seed: every lambda sees the same
    // batch sequence, which keeps bisection comparisons low-noise.
    std::mt19937_64 rng = seeded_engine(cfg.seed, 1);

    std::vector<double> g(model.dim(), 0.0);
    std::vector<double> sample_grad;
    ParameterVector prev;
    for (int t = 0; t < cfg.sgd_steps; ++t) {
        if (!theta.empty()) {
            std::fill(g.begin(), g.end(), 0.0);
            for (int b = 0; b < cfg.batch_size; ++b) {
                const std::size_t i = uniform_index(rng, n);
                const double l = model.loss(theta, data, i);
                const double expo = std::min((l - cfg.tau) / lambda, kExpCap);
                const double f = std::exp(expo);
                model.grad(theta, data, i, sample_grad);
                const double c = f / lambda;
                for (std::size_t d = 0; d < g.size(); ++d) g[d] += c * sample_grad[d];
            }
            const double gamma = step_at(cfg, t) / static_cast<double>(cfg.batch_size);
            prev = theta;
            for (std::size_t d = 0; d < theta.size(); ++d) theta[d] -= gamma * g[d];
            if (!theta_sane(theta)) {
                // Diverged; the surviving iterate stands for the verdict.
                theta = std::move(prev);
                break;
            }
        }
        if (surrogate_trace) {
            surrogate_trace->push_back(full_surrogate_mean(model, data, theta, cfg.tau, lambda));
        }
    }

    double mean = 0.0;
    const bool ok = full_surrogate_feasible(model, data, theta, cfg.tau, lambda, &mean);
    return FeasibilityResult{ok, std::move(theta), mean};
}

SolveResult solve_klrs(const LossModel& model, const Dataset& data, const SolverConfig& cfg) {
    cfg.validate();
    auto [theta_erm, e0] = erm_solve(model, data, cfg);
    if (!(cfg.tau > e0)) {
        throw InfeasibleTargetError("solve_klrs: tau (" + std::to_string(cfg.tau) +
                                    ") must exceed the ERM optimum estimate (" +
                                    std::to_string(e0) + ")");
    }

    SolveResult result;
    ParameterVector theta = theta_erm;
    const double floor = lambda_floor(cfg.tau);

    double lo = 0.0;
    double hi = cfg.lambda_init;
    FeasibilityResult fr = feasibility_check(model, data, hi, cfg, theta);
    result.trace.push_back({hi, fr.surrogate, fr.feasible});
    int doublings = 0;
    while (!fr.feasible) {
        if (doublings++ >= cfg.max_doublings) {
            throw InfeasibleTargetError("solve_klrs: still infeasible after " +
                                        std::to_string(cfg.max_doublings) + " doublings");
        }
        // Chain theta upward only from probes that kept the surrogate finite;
        // a diverged probe's iterate would poison every later check.
        if (cfg.warm_start && std::isfinite(fr.surrogate)) theta = fr.theta;
        lo = hi;
        hi *= 2.0;
        fr = feasibility_check(model, data, hi, cfg, theta);
        result.trace.push_back({hi, fr.surrogate, fr.feasible});
    }

    ParameterVector theta_best = fr.theta;
    while (hi - lo > cfg.epsilon) {
        const double mid = std::max(0.5 * (lo + hi), floor);
        if (mid >= hi) break;  // floor pinned against the feasible end
        // Warm start from the feasible end's certificate, not the last probe:
        // an infeasible probe may have diverged and would poison the rest.
        if (cfg.warm_start) theta = theta_best;
        fr = feasibility_check(model, data, mid, cfg, theta);
        result.trace.push_back({mid, fr.surrogate, fr.feasible});
        if (fr.feasible) {
            hi = mid;
            theta_best = fr.theta;
        } else {
            lo = mid;
        }
    }

    result.theta_star = std::move(theta_best);
    result.lambda_star = hi;
    result.feasible = true;
    return result;
}

ParameterVector term_baseline(const LossModel& model, const Dataset& data, double lambda,
                              const SolverConfig& cfg) {
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
    cfg.validate();
    ParameterVector theta(model.dim(), 0.0);
    std::vector<double> g(model.dim(), 0.0);
    std::vector<double> sample_grad;
    for (int t = 0; t < cfg.sgd_steps; ++t) {
        if (theta.empty()) break;
        LossVector lv(all_losses(model, theta, data));
        const DiscreteDistribution w = worst_case_weights(lv, lambda);
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < data.n(); ++i) {
            model.grad(theta, data, i, sample_grad);
            for (std::size_t d = 0; d < g.size(); ++d) g[d] += w[i] * sample_grad[d];
        }
        const double gamma = step_at(cfg, t);
        for (std::size_t d = 0; d < theta.size(); ++d) theta[d] -= gamma * g[d];
    }
    return theta;
}

std::pair<ParameterVector, double> erm_solve(const LossModel& model, const Dataset& data,
                                             const SolverConfig& cfg) {
    cfg.validate();
    ParameterVector theta(model.dim(), 0.0);
    const std::size_t n = data.n();
    std::mt19937_64 rng = seeded_engine(cfg.seed, 2);
    std::vector<double> g(model.dim(), 0.0);
    std::vector<double> sample_grad;
    for (int t = 0; t < cfg.sgd_steps; ++t) {
        if (theta.empty()) break;
        std::fill(g.begin(), g.end(), 0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::size_t i = uniform_index(rng, n);
            model.grad(theta, data, i, sample_grad);
            for (std::size_t d = 0; d < g.size(); ++d) g[d] += sample_grad[d];
        }
        const double gamma = step_at(cfg, t) / static_cast<double>(cfg.batch_size);
        for (std::size_t d = 0; d < theta.size(); ++d) theta[d] -= gamma * g[d];
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += model.loss(theta, data, i);
    mean /= static_cast<double>(n);
    return {std::move(theta), mean};
}

}  // namespace klrs
