"""Python surface of the KL-robust-satisficing library."""

from ._klrs import (
    InfeasibleTargetError,
    UnreachableDivergenceError,
    asymptotic_continuous_confidence,
    asymptotic_discrete_confidence,
    chernoff_confidence,
    chernoff_required_n,
    chi2_cdf,
    finite_sample_radius,
    gen_two_gaussian_toy,
    group_klrs_risk,
    h_outer,
    hier_tilted_risk,
    kl_divergence,
    label_shift_proportions,
    laplace_smooth,
    mean_variance_approx,
    metrics_from_scores,
    monte_carlo_expected_kl,
    normalized_surrogate,
    solve_fixed,
    solve_point,
    surrogate_mean,
    tail_bound,
    tilted_risk,
    validate_asymptotic_coverage,
    worst_case_weights,
)

__all__ = [
    "InfeasibleTargetError",
    "UnreachableDivergenceError",
    "asymptotic_continuous_confidence",
    "asymptotic_discrete_confidence",
    "chernoff_confidence",
    "chernoff_required_n",
    "chi2_cdf",
    "finite_sample_radius",
    "gen_two_gaussian_toy",
    "group_klrs_risk",
    "h_outer",
    "hier_tilted_risk",
    "kl_divergence",
    "label_shift_proportions",
    "laplace_smooth",
    "mean_variance_approx",
    "metrics_from_scores",
    "monte_carlo_expected_kl",
    "normalized_surrogate",
    "solve_fixed",
    "solve_point",
    "surrogate_mean",
    "tail_bound",
    "tilted_risk",
    "validate_asymptotic_coverage",
    "worst_case_weights",
]
