#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <vector>

#include "klrs/core_math.hpp"
#include "klrs/experiments.hpp"
#include "klrs/guarantees.hpp"
#include "klrs/hierarchical.hpp"
#include "klrs/models.hpp"
#include "klrs/solver.hpp"

namespace py = pybind11;

namespace {

klrs::LossVector make_lv(const std::vector<double>& losses, const std::vector<double>& weights) {
    if (weights.empty()) return klrs::LossVector(losses);
    return klrs::LossVector(losses, klrs::DiscreteDistribution(weights));
}

klrs::Dataset fixed_dataset(const std::vector<double>& losses) {
    klrs::Dataset data;
    data.features.reserve(losses.size());
    for (double l : losses) data.features.push_back({l});
    return data;
}

py::dict solve_to_dict(const klrs::SolveResult& res) {
    py::dict out;
    out["theta"] = res.theta_star;
    out["lambda_star"] = res.lambda_star;
    out["feasible"] = res.feasible;
    py::list trace;
    for (const auto& e : res.trace) {
        trace.append(py::make_tuple(e.lambda, e.objective, e.feasible));
    }
    out["trace"] = trace;
    return out;
}

klrs::SolverConfig make_cfg(double tau, double epsilon, double lambda_init, int max_doublings,
                            int sgd_steps, int batch_size, double step_size, std::uint64_t seed) {
    klrs::SolverConfig cfg;
    cfg.tau = tau;
    cfg.epsilon = epsilon;
    cfg.lambda_init = lambda_init;
    cfg.max_doublings = max_doublings;
    cfg.sgd_steps = sgd_steps;
    cfg.batch_size = batch_size;
    cfg.step_size = step_size;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_klrs, m) {
    m.doc() = "KL-robust-satisficing core operations";

    py::register_exception<klrs::InfeasibleTargetError>(m, "InfeasibleTargetError",
                                                        PyExc_ValueError);
    py::register_exception<klrs::UnreachableDivergenceError>(m, "UnreachableDivergenceError",
                                                             PyExc_ValueError);

    m.def(
        "tilted_risk",
        [](const std::vector<double>& losses, double lam, const std::vector<double>& weights) {
            return klrs::tilted_risk(make_lv(losses, weights), lam);
        },
        py::arg("losses"), py::arg("lam"), py::arg("weights") = std::vector<double>{});

    m.def(
        "surrogate_mean",
        [](const std::vector<double>& losses, double tau, double lam,
           const std::vector<double>& weights) {
            return klrs::surrogate_mean(make_lv(losses, weights), klrs::TiltConfig{lam, tau});
        },
        py::arg("losses"), py::arg("tau"), py::arg("lam"),
        py::arg("weights") = std::vector<double>{});

    m.def(
        "normalized_surrogate",
        [](const std::vector<double>& losses, double tau, double lam,
           const std::vector<double>& weights) {
            return klrs::normalized_surrogate(make_lv(losses, weights), klrs::TiltConfig{lam, tau});
        },
        py::arg("losses"), py::arg("tau"), py::arg("lam"),
        py::arg("weights") = std::vector<double>{});

    m.def(
        "worst_case_weights",
        [](const std::vector<double>& losses, double lam, const std::vector<double>& weights) {
            return klrs::worst_case_weights(make_lv(losses, weights), lam).probs;
        },
        py::arg("losses"), py::arg("lam"), py::arg("weights") = std::vector<double>{});

    m.def(
        "mean_variance_approx",
        [](const std::vector<double>& losses, double lam, const std::vector<double>& weights) {
            return klrs::mean_variance_approx(make_lv(losses, weights), lam);
        },
        py::arg("losses"), py::arg("lam"), py::arg("weights") = std::vector<double>{});

    m.def(
        "kl_divergence",
        [](const std::vector<double>& q, const std::vector<double>& p) {
            return klrs::kl_divergence(klrs::DiscreteDistribution(q),
                                       klrs::DiscreteDistribution(p));
        },
        py::arg("q"), py::arg("p"));

    m.def(
        "laplace_smooth",
        [](const std::vector<std::int64_t>& counts) {
            return klrs::laplace_smooth(counts).probs;
        },
        py::arg("counts"));

    m.def(
        "hier_tilted_risk",
        [](const std::vector<std::vector<double>>& group_losses, double lam1, double lam2,
           const std::vector<double>& group_weights) {
            std::vector<klrs::LossVector> lvs;
            lvs.reserve(group_losses.size());
            for (const auto& g : group_losses) lvs.push_back(klrs::LossVector(g));
            return klrs::hier_tilted_risk(lvs, lam1, lam2,
                                          klrs::DiscreteDistribution(group_weights));
        },
        py::arg("group_losses"), py::arg("lam1"), py::arg("lam2"), py::arg("group_weights"));

    m.def(
        "group_klrs_risk",
        [](const std::vector<double>& group_means, double lam,
           const std::vector<double>& group_weights) {
            return klrs::group_klrs_risk(group_means, lam,
                                         klrs::DiscreteDistribution(group_weights));
        },
        py::arg("group_means"), py::arg("lam"), py::arg("group_weights"));

    m.def("h_outer", &klrs::h_outer, py::arg("x"), py::arg("lam1"), py::arg("lam2"));

    m.def("tail_bound", &klrs::tail_bound, py::arg("lam"), py::arg("alpha"));
    m.def("chi2_cdf", &klrs::chi2_cdf, py::arg("dof"), py::arg("y"));
    m.def("asymptotic_discrete_confidence", &klrs::asymptotic_discrete_confidence, py::arg("k"),
          py::arg("n"), py::arg("r"));
    m.def(
        "asymptotic_continuous_confidence",
        [](double c, double lam, long long n, double r, long long k_cap) {
            const auto res = klrs::asymptotic_continuous_confidence(c, lam, n, r, k_cap);
            return py::make_tuple(res.value, res.k_star);
        },
        py::arg("c"), py::arg("lam"), py::arg("n"), py::arg("r"), py::arg("k_cap") = 0);
    m.def("chernoff_confidence", &klrs::chernoff_confidence, py::arg("k"), py::arg("n"),
          py::arg("r"));
    m.def("chernoff_required_n", &klrs::chernoff_required_n, py::arg("k"), py::arg("r"),
          py::arg("target"));
    m.def("finite_sample_radius", &klrs::finite_sample_radius, py::arg("k"), py::arg("n"),
          py::arg("delta"), py::arg("expected_kl"));
    m.def(
        "monte_carlo_expected_kl",
        [](const std::vector<double>& p_true, int n, int trials, std::uint64_t seed) {
            return klrs::monte_carlo_expected_kl(klrs::DiscreteDistribution(p_true), n, trials,
                                                 seed);
        },
        py::arg("p_true"), py::arg("n"), py::arg("trials"), py::arg("seed") = 0);
    m.def(
        "validate_asymptotic_coverage",
        [](const std::vector<double>& p_true, int n, double r, int trials, std::uint64_t seed) {
            return klrs::validate_asymptotic_coverage(klrs::DiscreteDistribution(p_true), n, r,
                                                      trials, seed);
        },
        py::arg("p_true"), py::arg("n"), py::arg("r"), py::arg("trials"), py::arg("seed") = 0);

    m.def("label_shift_proportions", &klrs::label_shift_proportions, py::arg("train_pos_frac"),
          py::arg("target_kl"));

    m.def(
        "metrics_from_scores",
        [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold,
           double alpha) {
            const auto r = klrs::metrics_from_scores(scores, labels, threshold, alpha);
            py::dict out;
            out["acc"] = r.acc;
            out["acc_pos"] = r.acc_pos;
            out["acc_neg"] = r.acc_neg;
            out["f1"] = r.f1;
            out["mcc"] = r.mcc;
            out["rank_error_var"] = r.rank_error_var;
            out["rank_error_cvar"] = r.rank_error_cvar;
            return out;
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.0, py::arg("alpha") = 0.9);

    m.def(
        "gen_two_gaussian_toy",
        [](std::uint64_t seed) {
            const klrs::Dataset d = klrs::gen_two_gaussian_toy(seed);
            py::dict out;
            out["features"] = d.features;
            out["labels"] = d.labels;
            out["group_ids"] = d.group_ids;
            return out;
        },
        py::arg("seed"));

    m.def(
        "solve_fixed",
        [](const std::vector<double>& losses, double tau, double epsilon, double lambda_init,
           int max_doublings, std::uint64_t seed) {
            const klrs::FixedLossModel model;
            const klrs::Dataset data = fixed_dataset(losses);
            klrs::SolverConfig cfg =
                make_cfg(tau, epsilon, lambda_init, max_doublings, 1, 1, 0.1, seed);
            return solve_to_dict(klrs::solve_klrs(model, data, cfg));
        },
        py::arg("losses"), py::arg("tau"), py::arg("epsilon") = 1e-4,
        py::arg("lambda_init") = 1.0, py::arg("max_doublings") = 60, py::arg("seed") = 0);

    m.def(
        "solve_point",
        [](const std::vector<std::vector<double>>& features, double tau, double epsilon,
           double lambda_init, int max_doublings, int sgd_steps, int batch_size, double step_size,
           std::uint64_t seed) {
            klrs::Dataset data;
            data.features = features;
            const klrs::PointEstimationModel model(data.width());
            klrs::SolverConfig cfg = make_cfg(tau, epsilon, lambda_init, max_doublings, sgd_steps,
                                              batch_size, step_size, seed);
            return solve_to_dict(klrs::solve_klrs(model, data, cfg));
        },
        py::arg("features"), py::arg("tau"), py::arg("epsilon") = 1e-4,
        py::arg("lambda_init") = 1.0, py::arg("max_doublings") = 60, py::arg("sgd_steps") = 2000,
        py::arg("batch_size") = 32, py::arg("step_size") = 0.1, py::arg("seed") = 0);
}
