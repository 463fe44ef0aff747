#include "klrs/hierarchical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "klrs/rng.hpp"

namespace klrs {

namespace {

constexpr double kExpCap = 700.0;
constexpr double kGolden = 0.382;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_lambdas(double lambda1, double lambda2) {
    require(std::isfinite(lambda1) && lambda1 > 0.0, "lambda1 must be positive");
    require(std::isfinite(lambda2) && lambda2 > 0.0, "lambda2 must be positive");
}

double step_at(const HierConfig& cfg, int t) {
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

// log E_g[(E_{z|g} exp((l - tau)/lambda2))^(lambda2/lambda1)] at theta.
// Non-finite losses cannot certify feasibility and push the statistic to +inf.
double log_statistic(const LossModel& model, const GroupedDataset& gdata,
                     const ParameterVector& theta, double tau, double lambda1, double lambda2) {
    const DiscreteDistribution gw = gdata.weights();
    const double ratio = lambda2 / lambda1;
    double shift = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(gdata.groups.size());
    for (std::size_t g = 0; g < gdata.groups.size(); ++g) {
        if (gw[g] <= 0.0) {
            terms[g] = -std::numeric_limits<double>::infinity();
            continue;
        }
        const std::vector<double> losses = all_losses(model, theta, gdata.groups[g]);
        if (!finite_losses(losses)) return std::numeric_limits<double>::infinity();
        const double log_inner = log_surrogate_mean(LossVector(losses), TiltConfig{lambda2, tau});
        terms[g] = std::log(gw[g]) + ratio * log_inner;
        shift = std::max(shift, terms[g]);
    }
    if (!std::isfinite(shift)) throw std::invalid_argument("group weights must have positive total");
    double sum = 0.0;
    for (double t : terms) {
        if (std::isfinite(t)) sum += std::exp(t - shift);
    }
    return shift + std::log(sum);
}

}  // namespace

void GroupedDataset::validate() const {
    require(!groups.empty(), "grouped dataset needs at least one group");
    for (const auto& g : groups) {
        g.validate();
        require(g.n() >= 1, "every group must be nonempty");
    }
    require(group_weights.empty() || group_weights.size() == groups.size(),
            "group_weights, when present, must have one entry per group");
}

std::size_t GroupedDataset::total_n() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.n();
    return n;
}

DiscreteDistribution GroupedDataset::weights() const {
    if (!group_weights.empty()) return DiscreteDistribution(group_weights);
    std::vector<double> w(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) w[g] = static_cast<double>(groups[g].n());
    return DiscreteDistribution::from_weights(w);
}

GroupedDataset GroupedDataset::from_dataset(const Dataset& data) {
    data.validate();
    require(!data.group_ids.empty(), "dataset has no group_ids to split on");
    const int g_max = *std::max_element(data.group_ids.begin(), data.group_ids.end());
    GroupedDataset out;
    out.groups.resize(static_cast<std::size_t>(g_max) + 1);
    for (std::size_t i = 0; i < data.n(); ++i) {
        Dataset& g = out.groups[static_cast<std::size_t>(data.group_ids[i])];
        g.features.push_back(data.features[i]);
        if (!data.labels.empty()) g.labels.push_back(data.labels[i]);
    }
    out.validate();  // rejects empty groups (gaps in the id range)
    return out;
}

GroupedDataset GroupedDataset::with_uniform_weights() const {
    GroupedDataset out = *this;
    out.group_weights.assign(groups.size(), 1.0 / static_cast<double>(groups.size()));
    return out;
}

void HierConfig::validate() const {
    require(std::isfinite(tau), "tau must be finite");
    require(w >= 0.0, "w must be >= 0");
    require(epsilon > 0.0, "epsilon must be positive");
    require(resolved_lambda_min() < resolved_lambda_max(),
            "lambda_min must be below lambda_max");
    require(resolved_lambda_min() > 0.0, "lambda_min must be positive");
    require(m1 >= 0 && m2 >= 1, "batch sizes must be positive");
    require(sgd_steps >= 1, "sgd_steps must be >= 1");
    require(step_size > 0.0, "step_size must be positive");
}

double HierConfig::resolved_lambda_min() const {
    if (lambda_min > 0.0) return lambda_min;
    return tau > 0.0 ? 1e-3 * tau : 1e-3;
}

double HierConfig::resolved_lambda_max() const {
    if (lambda_max > 0.0) return lambda_max;
    return tau > 0.0 ? 1e3 * tau : 1e3;
}

double hier_tilted_risk(const std::vector<LossVector>& group_losses, double lambda1,
                        double lambda2, const DiscreteDistribution& group_weights) {
    require_lambdas(lambda1, lambda2);
    require(group_losses.size() == group_weights.size(),
            "group_losses and group_weights must have equal length");
    std::vector<double> inner(group_losses.size());
    for (std::size_t g = 0; g < group_losses.size(); ++g) {
        inner[g] = tilted_risk(group_losses[g], lambda2);
    }
    return tilted_risk(LossVector(std::move(inner), group_weights), lambda1);
}

double h_outer(double x, double lambda1, double lambda2) {
    require_lambdas(lambda1, lambda2);
    require(x > 0.0, "h_outer needs x > 0");
    return std::pow(x, lambda2 / lambda1);
}

double h_outer_deriv(double x, double lambda1, double lambda2) {
    require_lambdas(lambda1, lambda2);
    require(x > 0.0, "h_outer_deriv needs x > 0");
    const double ratio = lambda2 / lambda1;
    return ratio * std::pow(x, ratio - 1.0);
}

HierFeasibilityResult hier_feasibility(const LossModel& model, const GroupedDataset& gdata,
                                       double lambda1, double lambda2, const HierConfig& cfg,
                                       const ParameterVector& theta_init) {
    require_lambdas(lambda1, lambda2);
    cfg.validate();
    gdata.validate();
    require(theta_init.size() == model.dim(), "theta_init has wrong dimension");

    const std::size_t n_groups = gdata.groups.size();
    const int m1 = cfg.m1 > 0 ? cfg.m1 : static_cast<int>(std::min<std::size_t>(n_groups, 8));
    const DiscreteDistribution gw = gdata.weights();
    std::vector<double> cum(n_groups);
    double acc = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        acc += gw[g];
        cum[g] = acc;
    }

    ParameterVector theta = theta_init;
    ParameterVector prev;
    std::mt19937_64 rng = seeded_engine(cfg.seed, 3);
    std::vector<double> grad_step(model.dim(), 0.0);
    std::vector<double> ds(model.dim(), 0.0);
    std::vector<double> sample_grad;

    for (int t = 0; t < cfg.sgd_steps && !theta.empty(); ++t) {
        std::fill(grad_step.begin(), grad_step.end(), 0.0);
        for (int i = 0; i < m1; ++i) {
            const double u = uniform01(rng);
            const std::size_t g =
                static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
            const Dataset& group = gdata.groups[std::min(g, n_groups - 1)];
            std::fill(ds.begin(), ds.end(), 0.0);
            double s = 0.0;
            for (int j = 0; j < cfg.m2; ++j) {
                const std::size_t k = uniform_index(rng, group.n());
                const double l = model.loss(theta, group, k);
                const double f = std::exp(std::min((l - cfg.tau) / lambda2, kExpCap));
                s += f;
                model.grad(theta, group, k, sample_grad);
                const double c = f / lambda2;
                for (std::size_t d = 0; d < ds.size(); ++d) ds[d] += c * sample_grad[d];
            }
            const double m2d = static_cast<double>(cfg.m2);
            s = std::max(s / m2d, 1e-300);
            const double hp = h_outer_deriv(s, lambda1, lambda2);
            for (std::size_t d = 0; d < grad_step.size(); ++d) {
                grad_step[d] += hp * ds[d] / m2d;
            }
        }
        const double gamma = step_at(cfg, t) / static_cast<double>(m1);
        prev = theta;
        for (std::size_t d = 0; d < theta.size(); ++d) theta[d] -= gamma * grad_step[d];
        if (!theta_sane(theta)) {
            // Diverged; the surviving iterate stands for the verdict.
            theta = std::move(prev);
            break;
        }
    }

    const double log_stat = log_statistic(model, gdata, theta, cfg.tau, lambda1, lambda2);
    return HierFeasibilityResult{log_stat <= 0.0, std::move(theta), std::exp(log_stat)};
}

Lambda2Result solve_lambda2(const LossModel& model, const GroupedDataset& gdata, double lambda1,
                            const HierConfig& cfg, const ParameterVector* theta_start) {
    require(std::isfinite(lambda1) && lambda1 > 0.0, "lambda1 must be positive");
    cfg.validate();
    const double l2_min = cfg.resolved_lambda_min();
    const double l2_max = cfg.resolved_lambda_max();
    const double floor = lambda_floor(cfg.tau);

    Lambda2Result result;
    ParameterVector theta = theta_start ? *theta_start : ParameterVector(model.dim(), 0.0);

    double lo = 0.0;
    double hi = l2_min;
    HierFeasibilityResult fr = hier_feasibility(model, gdata, lambda1, hi, cfg, theta);
    result.trace.push_back({hi, fr.statistic, fr.feasible});
    while (!fr.feasible) {
        if (hi >= l2_max) {
            throw InfeasibleTargetError("solve_lambda2: infeasible even at lambda_max = " +
                                        std::to_string(l2_max));
        }
        // Chain theta upward only from probes that kept the statistic finite;
        // a diverged probe's iterate would poison every later check.
        if (std::isfinite(fr.statistic)) theta = fr.theta;
        lo = hi;
        hi = std::min(hi * 2.0, l2_max);
        fr = hier_feasibility(model, gdata, lambda1, hi, cfg, theta);
        result.trace.push_back({hi, fr.statistic, fr.feasible});
    }

    ParameterVector theta_best = fr.theta;
    while (hi - lo > cfg.epsilon) {
        const double mid = std::max(0.5 * (lo + hi), floor);
        if (mid >= hi) break;
        // Warm start from the feasible end's certificate, not the last probe:
        // an infeasible probe may have diverged and would poison the rest.
        theta = theta_best;
        fr = hier_feasibility(model, gdata, lambda1, mid, cfg, theta);
        result.trace.push_back({mid, fr.statistic, fr.feasible});
        if (fr.feasible) {
            hi = mid;
            theta_best = fr.theta;
        } else {
            lo = mid;
        }
    }

    result.lambda2 = hi;
    result.theta = std::move(theta_best);
    return result;
}

HierSolveResult solve_hier(const LossModel& model, const GroupedDataset& gdata,
                           const HierConfig& cfg) {
    cfg.validate();
    gdata.validate();
    double left = cfg.resolved_lambda_min();
    double right = cfg.resolved_lambda_max();

    HierSolveResult result;
    bool any_feasible = false;
    double best_obj = std::numeric_limits<double>::infinity();

    std::map<double, std::optional<Lambda2Result>> memo;
    ParameterVector warm(model.dim(), 0.0);  // outer-to-inner continuation
    auto inner = [&](double lambda1) -> const std::optional<Lambda2Result>& {
        auto it = memo.find(lambda1);
        if (it == memo.end()) {
            std::optional<Lambda2Result> r;
            try {
                r = solve_lambda2(model, gdata, lambda1, cfg, &warm);
                warm = r->theta;
            } catch (const InfeasibleTargetError&) {
                r = std::nullopt;
            }
            it = memo.emplace(lambda1, std::move(r)).first;
            const auto& stored = it->second;
            const double obj = stored ? lambda1 + cfg.w * stored->lambda2
                                      : std::numeric_limits<double>::infinity();
            result.trace.push_back({lambda1,
                                    stored ? stored->lambda2
                                           : std::numeric_limits<double>::quiet_NaN(),
                                    obj, stored.has_value()});
            if (stored && obj < best_obj) {
                best_obj = obj;
                any_feasible = true;
                result.lambda1_star = lambda1;
                result.lambda2_star = stored->lambda2;
                result.theta_star = stored->theta;
            }
        }
        return it->second;
    };
    auto objective = [&](double lambda1) {
        const auto& r = inner(lambda1);
        return r ? lambda1 + cfg.w * r->lambda2 : std::numeric_limits<double>::infinity();
    };

    // The statistic is non-increasing in lambda1, so an infeasible right
    // endpoint means the whole bracket is infeasible.
    if (!inner(right).has_value()) {
        throw InfeasibleTargetError("solve_hier: infeasible across the lambda1 bracket");
    }

    while (right - left > cfg.epsilon) {
        const double l = left + kGolden * (right - left);
        const double r = left + (1.0 - kGolden) * (right - left);
        if (objective(l) <= objective(r)) {
            right = r;
        } else {
            left = l;
        }
    }
    if (!any_feasible) {
        throw InfeasibleTargetError("solve_hier: no feasible (lambda1, lambda2) found");
    }
    result.feasible = true;
    return result;
}

double group_klrs_risk(const std::vector<double>& group_mean_losses, double lambda,
                       const DiscreteDistribution& group_weights) {
    return tilted_risk(LossVector(group_mean_losses, group_weights), lambda);
}

}  // namespace klrs
