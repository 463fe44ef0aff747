#pragma once

#include <cstdint>
#include <vector>

#include "klrs/models.hpp"
#include "klrs/solver.hpp"

namespace klrs {

/// Samples partitioned by group; group_weights default to empirical |A_g|/N.
struct GroupedDataset {
    std::vector<Dataset> groups;
    std::vector<double> group_weights;  // empty = empirical

    void validate() const;
    std::size_t total_n() const;
    DiscreteDistribution weights() const;
    /// Splits a flat dataset on its group_ids column.
    static GroupedDataset from_dataset(const Dataset& data);
    GroupedDataset with_uniform_weights() const;
};

struct HierConfig {
    double tau = 0.0;
    double w = 1.0;  // objective weight on lambda2
    double epsilon = 1e-4;
    double lambda_min = 0.0;  // <= 0 means derive 1e-3 * tau
    double lambda_max = 0.0;  // <= 0 means derive 1e3 * tau
    int m1 = 0;  // group batch; 0 means min(G, 8)
    int m2 = 32;
    int sgd_steps = 2000;
    double step_size = 0.1;
    StepSchedule step_schedule = StepSchedule::kInverseT;
    std::uint64_t seed = 0;

    void validate() const;
    double resolved_lambda_min() const;
    double resolved_lambda_max() const;
};

struct HierTraceEntry {
    double lambda1;
    double lambda2;    // NaN when the inner solve found no feasible lambda2
    double objective;  // lambda1 + w * lambda2, +inf when infeasible
    bool feasible;
};

struct HierSolveResult {
    ParameterVector theta_star;
    double lambda1_star = 0.0;
    double lambda2_star = 0.0;
    bool feasible = false;
    std::vector<HierTraceEntry> trace;
};

/// Nested tilt: inner per-group tilted risk at lambda2, outer tilt of those
/// values at lambda1 under group_weights. Entirely log-space.
double hier_tilted_risk(const std::vector<LossVector>& group_losses, double lambda1,
                        double lambda2, const DiscreteDistribution& group_weights);

/// h(x) = x^(lambda2/lambda1), the outer transform of the feasibility chain.
double h_outer(double x, double lambda1, double lambda2);
/// dh/dx = (lambda2/lambda1) * x^(lambda2/lambda1 - 1).
double h_outer_deriv(double x, double lambda1, double lambda2);

struct HierFeasibilityResult {
    bool feasible;
    ParameterVector theta;
    double statistic;  // E_g[(within-group surrogate mean)^(lambda2/lambda1)]
};

/// Hierarchical mini-batch SGD: M1 groups from group_weights, M2 samples per
/// group, gradient (1/M1) * sum h'(s_i) * ds_i with s_i the within-group
/// surrogate mean. The estimator is biased (bias shrinks as M2 grows); the
/// verdict is the exact full-data statistic <= 1. Deterministic per seed.
HierFeasibilityResult hier_feasibility(const LossModel& model, const GroupedDataset& gdata,
                                       double lambda1, double lambda2, const HierConfig& cfg,
                                       const ParameterVector& theta_init);

struct Lambda2Result {
    double lambda2 = 0.0;
    ParameterVector theta;
    std::vector<TraceEntry> trace;  // (lambda2, statistic, feasible)
};

/// Doubling then bisection on lambda2 at fixed lambda1; throws
/// InfeasibleTargetError when even lambda_max is infeasible. theta_start,
/// when given, seeds the inner SGD (outer solves pass their warm theta).
Lambda2Result solve_lambda2(const LossModel& model, const GroupedDataset& gdata, double lambda1,
                            const HierConfig& cfg, const ParameterVector* theta_start = nullptr);

/// Golden-section (gamma = 0.382) on lambda1 over the bracket, minimizing
/// lambda1 + w * lambda2*(lambda1); returns the best feasible pair found.
HierSolveResult solve_hier(const LossModel& model, const GroupedDataset& gdata,
                           const HierConfig& cfg);

/// Degenerate no-conditional-shift case: tilted risk of per-group mean losses.
double group_klrs_risk(const std::vector<double>& group_mean_losses, double lambda,
                       const DiscreteDistribution& group_weights);

}  // namespace klrs
