#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "klrs/models.hpp"

namespace klrs {

enum class StepSchedule { kConstant, kInverseT };

struct SolverConfig {
    double tau = 0.0;
    double epsilon = 1e-4;
    double lambda_init = 1.0;
    int max_doublings = 60;
    int sgd_steps = 2000;
    int batch_size = 32;
    double step_size = 0.1;
    StepSchedule step_schedule = StepSchedule::kInverseT;
    std::uint64_t seed = 0;
    bool warm_start = true;

    void validate() const;
};

struct TraceEntry {
    double lambda;
    double objective;  // full-data surrogate mean at the step's final theta
    bool feasible;
};

struct SolveResult {
    ParameterVector theta_star;
    double lambda_star = 0.0;
    bool feasible = false;
    std::vector<TraceEntry> trace;
};

struct FeasibilityResult {
    bool feasible;
    ParameterVector theta;
    double surrogate;  // full-data surrogate mean
};

/// Mini-batch SGD on the surrogate mean with the per-sample gradient
/// (1/lambda) * exp((l - tau)/lambda) * grad_l, then a full-data verdict
/// surrogate mean <= 1 (strict, evaluated in log-space). Deterministic per
/// cfg.seed. surrogate_trace, when given, records the full-data surrogate
/// mean after every step.
FeasibilityResult feasibility_check(const LossModel& model, const Dataset& data, double lambda,
                                    const SolverConfig& cfg, const ParameterVector& theta_init,
                                    std::vector<double>* surrogate_trace = nullptr);

/// Doubling from cfg.lambda_init until feasible, then bisection on lambda to
/// width cfg.epsilon. Requires cfg.tau strictly above the ERM optimum found by
/// a preliminary ERM run; throws InfeasibleTargetError otherwise or when
/// max_doublings is exhausted. The lower bracket starts at 0 but evaluation
/// never goes below a small floor derived from tau.
SolveResult solve_klrs(const LossModel& model, const Dataset& data, const SolverConfig& cfg);

/// Tilted-risk minimization at fixed lambda: full-batch descent with
/// softmax(l/lambda) sample weights (the worst-case weights). Comparison
/// baseline; the full batch sidesteps the biased mini-batch estimator.
ParameterVector term_baseline(const LossModel& model, const Dataset& data, double lambda,
                              const SolverConfig& cfg);

/// Plain SGD on the mean loss; returns (theta, full-data mean loss).
std::pair<ParameterVector, double> erm_solve(const LossModel& model, const Dataset& data,
                                             const SolverConfig& cfg);

}  // namespace klrs
