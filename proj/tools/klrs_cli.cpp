#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "klrs/experiments.hpp"
#include "klrs/guarantees.hpp"
#include "klrs/hierarchical.hpp"
#include "klrs/models.hpp"
#include "klrs/rng.hpp"
#include "klrs/solver.hpp"

namespace {

using klrs::ConfigMap;
using klrs::ConfigValue;
using klrs::Dataset;
using klrs::Report;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One CLI option: its parsed flag, a setter fed from --config JSON, and an
// echo of the effective value for report provenance.
struct Binding {
    CLI::Option* opt;
    std::function<void(const nlohmann::json&)> set;
    std::function<ConfigValue()> get;
};

struct Registry {
    std::map<std::string, Binding> bindings;
    std::set<std::string> provided;

    bool has(const std::string& key) const { return provided.count(key) > 0; }

    ConfigMap echo(const std::string& command) const {
        ConfigMap out;
        out["command"] = command;
        for (const auto& [key, b] : bindings) out[key] = b.get();
        return out;
    }
};

ConfigValue to_config_value(bool v) { return v; }
ConfigValue to_config_value(double v) { return v; }
ConfigValue to_config_value(std::uint64_t v) { return v; }
ConfigValue to_config_value(int v) { return static_cast<std::uint64_t>(v); }
ConfigValue to_config_value(const std::string& v) { return v; }
ConfigValue to_config_value(const std::vector<std::string>& v) {
    std::string joined;
    for (const auto& s : v) {
        if (!joined.empty()) joined += ',';
        joined += s;
    }
    return joined;
}

template <typename T>
void assign_from_json(T& var, const nlohmann::json& j) {
    var = j.get<T>();
}

void assign_from_json(std::vector<std::string>& var, const nlohmann::json& j) {
    if (j.is_string()) {
        var.clear();
        std::string cur;
        for (char ch : j.get<std::string>()) {
            if (ch == ',') {
                var.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        var.push_back(cur);
        return;
    }
    var = j.get<std::vector<std::string>>();
}

template <typename T>
CLI::Option* bind_option(CLI::App* cmd, Registry& reg, const std::string& name, T& var,
                         const std::string& desc) {
    CLI::Option* opt = cmd->add_option("--" + name, var, desc);
    if constexpr (std::is_same_v<T, std::vector<std::string>>) opt->delimiter(',');
    reg.bindings[name] = Binding{opt, [&var](const nlohmann::json& j) { assign_from_json(var, j); },
                                 [&var]() { return to_config_value(var); }};
    return opt;
}

CLI::Option* bind_flag(CLI::App* cmd, Registry& reg, const std::string& name, bool& var,
                       const std::string& desc) {
    CLI::Option* opt = cmd->add_flag("--" + name, var, desc);
    reg.bindings[name] = Binding{opt, [&var](const nlohmann::json& j) { assign_from_json(var, j); },
                                 [&var]() { return to_config_value(var); }};
    return opt;
}

// Shared flags repeated on every subcommand.
struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "json";
};

void bind_globals(CLI::App* cmd, Registry& reg, GlobalOpts& g) {
    cmd->add_option("--config", g.config_path, "JSON config file; flags override its keys");
    bind_option(cmd, reg, "seed", g.seed, "RNG seed");
    bind_option(cmd, reg, "out", g.out, "report path (stdout when empty)");
    bind_option(cmd, reg, "format", g.format, "report format: json|csv");
}

void apply_config(const GlobalOpts& g, Registry& reg) {
    for (const auto& [key, b] : reg.bindings) {
        if (b.opt->count() > 0) reg.provided.insert(key);
    }
    if (g.config_path.empty()) return;
    std::ifstream in(g.config_path);
    if (!in) throw UsageError("cannot open config: " + g.config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("bad config " + g.config_path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        const auto it = reg.bindings.find(key);
        if (it == reg.bindings.end()) throw UsageError("unknown config key '" + key + "'");
        if (it->second.opt->count() > 0) continue;  // flag wins
        try {
            it->second.set(value);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("bad config value for '" + key + "': " + e.what());
        }
        reg.provided.insert(key);
    }
}

void write_report(const Report& report, const GlobalOpts& g, const std::string& path) {
    if (path.empty()) {
        std::cout << klrs::render_report(report, g.format);
    } else {
        klrs::emit_report(report, g.format, path);
    }
}

std::string suffix_path(const std::string& path, std::size_t i) {
    if (path.empty()) return path;
    const std::size_t slash = path.find_last_of('/');
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
        return path + "_" + std::to_string(i);
    }
    return path.substr(0, dot) + "_" + std::to_string(i) + path.substr(dot);
}

// Dataset/model flags shared by solve and hsolve.
struct DataOpts {
    std::string data_path;
    std::vector<std::string> features;
    std::string label;
    std::string group;
    std::string model = "point";
};

void bind_data(CLI::App* cmd, Registry& reg, DataOpts& d) {
    bind_option(cmd, reg, "data", d.data_path, "input CSV path");
    bind_option(cmd, reg, "features", d.features, "feature column names");
    bind_option(cmd, reg, "label", d.label, "label column name");
    bind_option(cmd, reg, "group", d.group, "group column name");
    bind_option(cmd, reg, "model", d.model, "loss model: point|logistic|least_squares");
}

Dataset load_data(const DataOpts& d) {
    if (d.data_path.empty()) throw UsageError("--data is required");
    if (d.features.empty()) throw UsageError("--features is required");
    klrs::CsvSchema schema;
    schema.feature_columns = d.features;
    schema.label_column = d.label;
    schema.group_column = d.group;
    return klrs::load_csv_dataset(d.data_path, schema);
}

std::unique_ptr<klrs::LossModel> make_model(const std::string& name, const Dataset& data) {
    if (name == "point") return std::make_unique<klrs::PointEstimationModel>(data.width());
    if (!data.labels.empty()) {
        if (name == "logistic") return std::make_unique<klrs::LogisticModel>(data.width());
        if (name == "least_squares") return std::make_unique<klrs::LeastSquaresModel>(data.width());
    } else if (name == "logistic" || name == "least_squares") {
        throw UsageError("model '" + name + "' needs a --label column");
    }
    throw UsageError("unknown model '" + name + "'");
}

std::pair<klrs::TauStrategy, double> parse_tau_rule(const std::string& rule) {
    const std::size_t colon = rule.find(':');
    if (colon == std::string::npos) throw UsageError("tau rule must look like strategy:a");
    const std::string name = rule.substr(0, colon);
    double a = 0.0;
    try {
        a = std::stod(rule.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("bad tau rule parameter in '" + rule + "'");
    }
    if (name == "scale_erm") return {klrs::TauStrategy::kScaleErm, a};
    if (name == "minmax_mix") return {klrs::TauStrategy::kMinmaxMix, a};
    if (name == "mean_plus_var") return {klrs::TauStrategy::kMeanPlusVar, a};
    throw UsageError("unknown tau strategy '" + name + "'");
}

klrs::StepSchedule parse_schedule(const std::string& name) {
    if (name == "constant") return klrs::StepSchedule::kConstant;
    if (name == "inverse_t") return klrs::StepSchedule::kInverseT;
    throw UsageError("unknown step schedule '" + name + "'");
}

// Solver knobs shared by solve, labelshift, and toy.
struct SolverOpts {
    double tau = 0.0;
    std::string tau_rule;
    double epsilon = 1e-4;
    double lambda_init = 1.0;
    int max_doublings = 60;
    int sgd_steps = 2000;
    int batch_size = 32;
    double step_size = 0.1;
    std::string schedule = "inverse_t";
    bool no_warm_start = false;
};

void bind_solver(CLI::App* cmd, Registry& reg, SolverOpts& s, bool with_tau_flags) {
    if (with_tau_flags) {
        CLI::Option* t = bind_option(cmd, reg, "tau", s.tau, "performance target");
        CLI::Option* r = bind_option(cmd, reg, "tau-rule", s.tau_rule,
                                     "target rule scale_erm:a|minmax_mix:a|mean_plus_var:a");
        t->excludes(r);
    }
    bind_option(cmd, reg, "epsilon", s.epsilon, "bisection tolerance on lambda");
    bind_option(cmd, reg, "lambda-init", s.lambda_init, "initial lambda for doubling");
    bind_option(cmd, reg, "max-doublings", s.max_doublings, "doubling budget");
    bind_option(cmd, reg, "sgd-steps", s.sgd_steps, "SGD steps per feasibility check");
    bind_option(cmd, reg, "batch-size", s.batch_size, "SGD batch size");
    bind_option(cmd, reg, "step-size", s.step_size, "SGD step size");
    bind_option(cmd, reg, "step-schedule", s.schedule, "constant|inverse_t");
    bind_flag(cmd, reg, "no-warm-start", s.no_warm_start, "restart theta at every check");
}

klrs::SolverConfig solver_config(const SolverOpts& s, const GlobalOpts& g) {
    klrs::SolverConfig cfg;
    cfg.tau = s.tau;
    cfg.epsilon = s.epsilon;
    cfg.lambda_init = s.lambda_init;
    cfg.max_doublings = s.max_doublings;
    cfg.sgd_steps = s.sgd_steps;
    cfg.batch_size = s.batch_size;
    cfg.step_size = s.step_size;
    cfg.step_schedule = parse_schedule(s.schedule);
    cfg.seed = g.seed;
    cfg.warm_start = !s.no_warm_start;
    return cfg;
}

double resolve_tau(const Registry& reg, const SolverOpts& s, const std::vector<double>& erm_losses) {
    if (reg.has("tau")) return s.tau;
    if (!s.tau_rule.empty()) {
        const auto [strategy, a] = parse_tau_rule(s.tau_rule);
        return klrs::select_tau(strategy, a, klrs::erm_loss_stats(erm_losses));
    }
    throw UsageError("provide --tau or --tau-rule");
}

std::vector<double> tau_grid(double e0, double top, int k) {
    std::vector<double> taus;
    for (int i = 0; i < k; ++i) {
        taus.push_back(e0 + (top - e0) * (2.0 * static_cast<double>(i) + 1.0) /
                                (2.0 * static_cast<double>(k)));
    }
    return taus;
}

std::map<std::string, double> loss_metrics(const std::vector<double>& losses) {
    const klrs::ErmLossStats s = klrs::erm_loss_stats(losses);
    return {{"loss_mean", s.mean}, {"loss_max", s.max}, {"loss_min", s.min}, {"loss_var", s.var}};
}

void add_score_metrics(std::map<std::string, double>& out, const std::string& prefix,
                       const klrs::MetricsReport& m) {
    out[prefix + "acc"] = m.acc;
    out[prefix + "acc_pos"] = m.acc_pos;
    out[prefix + "acc_neg"] = m.acc_neg;
    out[prefix + "f1"] = m.f1;
    out[prefix + "mcc"] = m.mcc;
    out[prefix + "rank_error_var"] = m.rank_error_var;
    out[prefix + "rank_error_cvar"] = m.rank_error_cvar;
}

std::vector<double> logistic_scores(const klrs::ParameterVector& theta, const Dataset& data) {
    std::vector<double> scores;
    for (const auto& row : data.features) {
        double s = theta.back();
        for (std::size_t j = 0; j < row.size(); ++j) s += theta[j] * row[j];
        scores.push_back(s);
    }
    return scores;
}

std::vector<int> int_labels(const Dataset& data) {
    std::vector<int> labels;
    for (double y : data.labels) labels.push_back(static_cast<int>(y));
    return labels;
}

// ---- solve ----

struct SolveCmd {
    GlobalOpts g;
    DataOpts data;
    SolverOpts solver;
    Registry reg;
    int tau_sweep = 0;
    double threshold = 0.0;
    double alpha = 0.9;

    void run() {
        const Dataset ds = load_data(data);
        const auto model = make_model(data.model, ds);
        klrs::SolverConfig cfg = solver_config(solver, g);

        const auto [theta_erm, e0] = klrs::erm_solve(*model, ds, cfg);
        const std::vector<double> erm_losses = klrs::all_losses(*model, theta_erm, ds);

        std::vector<double> taus;
        if (tau_sweep > 0) {
            taus = tau_grid(e0, klrs::erm_loss_stats(erm_losses).max, tau_sweep);
        } else {
            taus = {resolve_tau(reg, solver, erm_losses)};
        }

        for (std::size_t i = 0; i < taus.size(); ++i) {
            cfg.tau = taus[i];
            const klrs::SolveResult res = klrs::solve_klrs(*model, ds, cfg);
            Report report;
            report.config = reg.echo("solve");
            report.config["tau"] = cfg.tau;
            report.trace = res.trace;
            report.result.theta = res.theta_star;
            report.result.lambda1 = res.lambda_star;
            const std::vector<double> losses = klrs::all_losses(*model, res.theta_star, ds);
            report.metrics = loss_metrics(losses);
            report.metrics["tau"] = cfg.tau;
            report.metrics["lambda_star"] = res.lambda_star;
            if (data.model == "logistic") {
                add_score_metrics(report.metrics, "",
                                  klrs::metrics_from_scores(logistic_scores(res.theta_star, ds),
                                                            int_labels(ds), threshold, alpha));
            }
            write_report(report, g, taus.size() == 1 ? g.out : suffix_path(g.out, i));
        }
    }
};

// ---- hsolve ----

struct HsolveCmd {
    GlobalOpts g;
    DataOpts data;
    Registry reg;
    double tau = 0.0;
    std::string tau_rule;
    double w = 1.0;
    double epsilon = 1e-4;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int m1 = 0;
    int m2 = 32;
    int sgd_steps = 2000;
    double step_size = 0.1;
    std::string schedule = "inverse_t";
    bool uniform_groups = false;

    void run() {
        const Dataset ds = load_data(data);
        if (ds.group_ids.empty()) throw UsageError("hsolve needs a --group column");
        const auto model = make_model(data.model, ds);
        klrs::GroupedDataset gdata = klrs::GroupedDataset::from_dataset(ds);
        if (uniform_groups) gdata = gdata.with_uniform_weights();

        klrs::HierConfig cfg;
        cfg.w = w;
        cfg.epsilon = epsilon;
        cfg.lambda_min = lambda_min;
        cfg.lambda_max = lambda_max;
        cfg.m1 = m1;
        cfg.m2 = m2;
        cfg.sgd_steps = sgd_steps;
        cfg.step_size = step_size;
        cfg.step_schedule = parse_schedule(schedule);
        cfg.seed = g.seed;

        if (reg.has("tau")) {
            cfg.tau = tau;
        } else if (!tau_rule.empty()) {
            klrs::SolverConfig flat;
            flat.sgd_steps = sgd_steps;
            flat.step_size = step_size;
            flat.seed = g.seed;
            const auto [theta_erm, e0] = klrs::erm_solve(*model, ds, flat);
            const auto [strategy, a] = parse_tau_rule(tau_rule);
            cfg.tau = klrs::select_tau(strategy, a,
                                       klrs::erm_loss_stats(klrs::all_losses(*model, theta_erm, ds)));
        } else {
            throw UsageError("provide --tau or --tau-rule");
        }

        const klrs::HierSolveResult res = klrs::solve_hier(*model, gdata, cfg);
        Report report;
        report.config = reg.echo("hsolve");
        report.config["tau"] = cfg.tau;
        for (const auto& t : res.trace) report.trace.push_back({t.lambda1, t.objective, t.feasible});
        report.result.theta = res.theta_star;
        report.result.lambda1 = res.lambda1_star;
        report.result.lambda2 = res.lambda2_star;
        report.metrics["tau"] = cfg.tau;
        report.metrics["groups"] = static_cast<double>(gdata.groups.size());
        report.metrics["objective"] = res.lambda1_star + w * res.lambda2_star;
        write_report(report, g, g.out);
    }
};

// ---- fairpca ----

struct FairPcaCmd {
    GlobalOpts g;
    DataOpts data;
    Registry reg;
    int dim = 1;
    double ratio = 0.5;
    double epsilon = 1e-4;
    double lambda_init = 1.0;
    int max_doublings = 60;
    int steps = 400;
    double step_size = 0.1;

    void run() {
        const Dataset ds = load_data(data);
        if (ds.group_ids.empty()) throw UsageError("fairpca needs a --group column");
        const klrs::GroupedDataset gdata = klrs::GroupedDataset::from_dataset(ds);
        std::vector<klrs::Matrix> groups;
        for (const Dataset& grp : gdata.groups) {
            klrs::Matrix m(grp.n(), grp.width());
            for (std::size_t i = 0; i < grp.n(); ++i) {
                for (std::size_t j = 0; j < grp.width(); ++j) m(i, j) = grp.features[i][j];
            }
            groups.push_back(std::move(m));
        }

        klrs::FairPcaConfig cfg;
        cfg.epsilon = epsilon;
        cfg.lambda_init = lambda_init;
        cfg.max_doublings = max_doublings;
        cfg.steps = steps;
        cfg.step_size = step_size;
        const klrs::FairPcaResult res = klrs::fair_pca_run(groups, dim, ratio, cfg);

        Report report;
        report.config = reg.echo("fairpca");
        report.trace = res.trace;
        report.result.theta = res.u.a;
        report.result.lambda1 = res.lambda_star;
        report.metrics["tau"] = res.tau;
        report.metrics["lambda_star"] = res.lambda_star;
        double lmax = res.group_losses[0], lmin = res.group_losses[0], avg = 0.0, m = 0.0;
        for (std::size_t i = 0; i < res.group_losses.size(); ++i) {
            report.metrics["group_loss_" + std::to_string(i)] = res.group_losses[i];
            lmax = std::max(lmax, res.group_losses[i]);
            lmin = std::min(lmin, res.group_losses[i]);
            avg += static_cast<double>(groups[i].rows) * res.group_losses[i];
            m += static_cast<double>(groups[i].rows);
        }
        report.metrics["gap"] = lmax - lmin;
        report.metrics["avg_loss"] = avg / m;
        write_report(report, g, g.out);
    }
};

// ---- labelshift ----

struct LabelShiftCmd {
    GlobalOpts g;
    SolverOpts solver;
    Registry reg;
    double train_pos = 0.2;
    double target_kl = 0.1;
    int train_size = 2000;
    int test_size = 400;
    double separation = 1.0;
    double noise = 1.0;
    double threshold = 0.0;
    double alpha = 0.9;

    void run() {
        if (solver.tau_rule.empty() && !reg.has("tau")) solver.tau_rule = "scale_erm:1.5";
        const double q = klrs::label_shift_proportions(train_pos, target_kl);
        const auto pos_count = [](double frac, int n) {
            return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
        };
        const std::size_t train_pos_n = pos_count(train_pos, train_size);
        const std::size_t test_pos_n = pos_count(q, test_size);
        const Dataset train = klrs::gen_binary_gaussian(
            g.seed, train_pos_n, static_cast<std::size_t>(train_size) - train_pos_n, separation,
            noise);
        const Dataset test = klrs::gen_binary_gaussian(
            g.seed + 1, test_pos_n, static_cast<std::size_t>(test_size) - test_pos_n, separation,
            noise);

        const klrs::LogisticModel model(train.width());
        klrs::SolverConfig cfg = solver_config(solver, g);
        const auto [theta_erm, e0] = klrs::erm_solve(model, train, cfg);
        const std::vector<double> erm_losses = klrs::all_losses(model, theta_erm, train);
        cfg.tau = resolve_tau(reg, solver, erm_losses);
        const klrs::SolveResult res = klrs::solve_klrs(model, train, cfg);

        Report report;
        report.config = reg.echo("labelshift");
        report.config["tau"] = cfg.tau;
        report.trace = res.trace;
        report.result.theta = res.theta_star;
        report.result.lambda1 = res.lambda_star;
        report.metrics["tau"] = cfg.tau;
        report.metrics["lambda_star"] = res.lambda_star;
        report.metrics["target_kl"] = target_kl;
        report.metrics["test_pos_share"] =
            static_cast<double>(test_pos_n) / static_cast<double>(test_size);
        report.metrics["train_pos_share"] = train_pos;
        const std::vector<int> labels = int_labels(test);
        add_score_metrics(report.metrics, "erm_",
                          klrs::metrics_from_scores(logistic_scores(theta_erm, test), labels,
                                                    threshold, alpha));
        add_score_metrics(report.metrics, "klrs_",
                          klrs::metrics_from_scores(logistic_scores(res.theta_star, test), labels,
                                                    threshold, alpha));
        write_report(report, g, g.out);
    }
};

// ---- longtail ----

struct LongTailCmd {
    GlobalOpts g;
    Registry reg;
    std::string data_path;
    std::vector<std::string> features;
    std::string label = "y";
    std::string group;
    double rho = 0.1;
    int classes = 10;
    int per_class = 100;
    std::string out_data;

    Dataset synthesize() const {
        Dataset ds;
        std::mt19937_64 rng = klrs::seeded_engine(g.seed, 6);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (int c = 0; c < classes; ++c) {
            const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(classes);
            for (int i = 0; i < per_class; ++i) {
                ds.features.push_back({3.0 * std::cos(angle) + nd(rng), 3.0 * std::sin(angle) + nd(rng)});
                ds.labels.push_back(static_cast<double>(c));
            }
        }
        return ds;
    }

    void run() {
        Dataset ds;
        if (!data_path.empty()) {
            klrs::CsvSchema schema;
            schema.feature_columns = features;
            schema.label_column = label;
            schema.group_column = group;
            ds = klrs::load_csv_dataset(data_path, schema);
        } else {
            if (classes < 2) throw UsageError("--classes must be >= 2");
            if (per_class < 1) throw UsageError("--per-class must be >= 1");
            ds = synthesize();
        }
        const Dataset down = klrs::long_tail_downsample(ds, rho, g.seed);
        if (!out_data.empty()) {
            klrs::write_csv_dataset(out_data, down, klrs::CsvSchema::defaults_for(down));
        }

        Report report;
        report.config = reg.echo("longtail");
        std::map<double, std::size_t> sizes;
        for (double y : down.labels) ++sizes[y];
        std::vector<std::size_t> counts;
        for (const auto& [label_value, count] : sizes) counts.push_back(count);
        std::sort(counts.rbegin(), counts.rend());
        report.metrics["classes"] = static_cast<double>(counts.size());
        report.metrics["kept_total"] = static_cast<double>(down.n());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            report.metrics["class_size_" + std::to_string(i)] = static_cast<double>(counts[i]);
        }
        report.metrics["largest_class"] = static_cast<double>(counts.front());
        report.metrics["smallest_class"] = static_cast<double>(counts.back());
        write_report(report, g, g.out);
    }
};

// ---- toy ----

struct ToyCmd {
    GlobalOpts g;
    SolverOpts solver;
    Registry reg;
    int tau_sweep = 5;

    void run() {
        const Dataset ds = klrs::gen_two_gaussian_toy(g.seed);
        const klrs::PointEstimationModel model(2);
        klrs::SolverConfig cfg = solver_config(solver, g);

        const auto [theta_erm, e0] = klrs::erm_solve(model, ds, cfg);
        const std::vector<double> erm_losses = klrs::all_losses(model, theta_erm, ds);

        std::vector<double> taus;
        if (reg.has("tau") || !solver.tau_rule.empty()) {
            taus = {resolve_tau(reg, solver, erm_losses)};
        } else {
            taus = tau_grid(e0, klrs::erm_loss_stats(erm_losses).max, tau_sweep);
        }

        for (std::size_t i = 0; i < taus.size(); ++i) {
            cfg.tau = taus[i];
            const klrs::SolveResult res = klrs::solve_klrs(model, ds, cfg);
            Report report;
            report.config = reg.echo("toy");
            report.config["tau"] = cfg.tau;
            report.trace = res.trace;
            report.result.theta = res.theta_star;
            report.result.lambda1 = res.lambda_star;
            const std::vector<double> losses = klrs::all_losses(model, res.theta_star, ds);
            report.metrics = loss_metrics(losses);
            report.metrics["tau"] = cfg.tau;
            report.metrics["lambda_star"] = res.lambda_star;
            const klrs::DiscreteDistribution wcw =
                klrs::worst_case_weights(klrs::LossVector(losses), res.lambda_star);
            double minority = 0.0;
            std::size_t minority_count = 0;
            for (std::size_t k = 0; k < ds.n(); ++k) {
                if (ds.group_ids[k] == 1) {
                    minority += wcw[k];
                    ++minority_count;
                }
            }
            report.metrics["minority_mass"] = minority;
            report.metrics["minority_count"] = static_cast<double>(minority_count);
            report.metrics["majority_count"] = static_cast<double>(ds.n() - minority_count);
            write_report(report, g, taus.size() == 1 ? g.out : suffix_path(g.out, i));
        }
    }
};

// ---- guarantees ----

struct GuaranteesCmd {
    GlobalOpts g;
    Registry reg;
    double lambda = 1.0;
    double alpha = 0.0;
    int k = 2;
    std::uint64_t n = 1;
    double r = 0.0;
    double c = 1.0;
    std::uint64_t k_cap = 0;
    double target = 0.0;
    double delta = 0.05;
    double expected_kl = 0.0;
    std::vector<std::string> p_true;
    int mc_n = 100;
    int mc_trials = 1000;

    void run() {
        std::map<std::string, double> values;
        const long long ni = static_cast<long long>(n);
        if (reg.has("lambda") && reg.has("alpha")) {
            values["tail_bound"] = klrs::tail_bound(lambda, alpha);
        }
        if (reg.has("k") && reg.has("n") && reg.has("r")) {
            values["asymptotic_discrete"] = klrs::asymptotic_discrete_confidence(k, ni, r);
            values["chernoff"] = klrs::chernoff_confidence(k, ni, r);
        }
        if (reg.has("c") && reg.has("lambda") && reg.has("n") && reg.has("r")) {
            const klrs::ContinuousConfidence cc = klrs::asymptotic_continuous_confidence(
                c, lambda, ni, r, static_cast<long long>(k_cap));
            values["asymptotic_continuous"] = cc.value;
            values["asymptotic_continuous_k"] = static_cast<double>(cc.k_star);
        }
        if (reg.has("k") && reg.has("r") && reg.has("target")) {
            values["chernoff_required_n"] =
                static_cast<double>(klrs::chernoff_required_n(k, r, target));
        }
        if (reg.has("k") && reg.has("n") && reg.has("delta")) {
            values["finite_sample_radius"] = klrs::finite_sample_radius(k, ni, delta, expected_kl);
        }
        if (!p_true.empty()) {
            std::vector<double> probs;
            for (const std::string& s : p_true) probs.push_back(std::stod(s));
            const klrs::DiscreteDistribution p(probs);
            values["monte_carlo_expected_kl"] =
                klrs::monte_carlo_expected_kl(p, mc_n, mc_trials, g.seed);
            if (reg.has("r")) {
                values["coverage"] =
                    klrs::validate_asymptotic_coverage(p, mc_n, r, mc_trials, g.seed);
            }
        }
        if (values.empty()) {
            throw UsageError("no guarantee selected; pass e.g. --k --n --r or --lambda --alpha");
        }

        for (const auto& [name, value] : values) {
            char buf[64];
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
            std::cout << name << " = " << std::string(buf, ptr) << "\n";
        }
        if (!g.out.empty()) {
            Report report;
            report.config = reg.echo("guarantees");
            report.guarantees = values;
            write_report(report, g, g.out);
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KL robust satisficing solvers, experiments, and guarantees"};
    app.require_subcommand(1);

    SolveCmd solve;
    CLI::App* solve_app = app.add_subcommand("solve", "bisection KL-RS solve on a CSV dataset");
    bind_globals(solve_app, solve.reg, solve.g);
    bind_data(solve_app, solve.reg, solve.data);
    bind_solver(solve_app, solve.reg, solve.solver, true);
    bind_option(solve_app, solve.reg, "tau-sweep", solve.tau_sweep, "solve a grid of k targets");
    bind_option(solve_app, solve.reg, "threshold", solve.threshold, "classification threshold");
    bind_option(solve_app, solve.reg, "alpha", solve.alpha, "rank-error tail level");

    HsolveCmd hsolve;
    CLI::App* hsolve_app = app.add_subcommand("hsolve", "hierarchical KL-RS solve");
    bind_globals(hsolve_app, hsolve.reg, hsolve.g);
    bind_data(hsolve_app, hsolve.reg, hsolve.data);
    {
        CLI::Option* t = bind_option(hsolve_app, hsolve.reg, "tau", hsolve.tau, "performance target");
        CLI::Option* r = bind_option(hsolve_app, hsolve.reg, "tau-rule", hsolve.tau_rule,
                                     "target rule strategy:a");
        t->excludes(r);
    }
    bind_option(hsolve_app, hsolve.reg, "w", hsolve.w, "objective weight on lambda2");
    bind_option(hsolve_app, hsolve.reg, "epsilon", hsolve.epsilon, "search tolerance");
    bind_option(hsolve_app, hsolve.reg, "lambda-min", hsolve.lambda_min, "lambda1 bracket lower end");
    bind_option(hsolve_app, hsolve.reg, "lambda-max", hsolve.lambda_max, "lambda1 bracket upper end");
    bind_option(hsolve_app, hsolve.reg, "m1", hsolve.m1, "group batch size");
    bind_option(hsolve_app, hsolve.reg, "m2", hsolve.m2, "within-group batch size");
    bind_option(hsolve_app, hsolve.reg, "sgd-steps", hsolve.sgd_steps, "SGD steps per check");
    bind_option(hsolve_app, hsolve.reg, "step-size", hsolve.step_size, "SGD step size");
    bind_option(hsolve_app, hsolve.reg, "step-schedule", hsolve.schedule, "constant|inverse_t");
    bind_flag(hsolve_app, hsolve.reg, "uniform-groups", hsolve.uniform_groups,
              "weight groups uniformly instead of by size");

    FairPcaCmd fairpca;
    CLI::App* fairpca_app = app.add_subcommand("fairpca", "target-feasible PCA across groups");
    bind_globals(fairpca_app, fairpca.reg, fairpca.g);
    bind_data(fairpca_app, fairpca.reg, fairpca.data);
    bind_option(fairpca_app, fairpca.reg, "dim", fairpca.dim, "projection dimension");
    bind_option(fairpca_app, fairpca.reg, "ratio", fairpca.ratio, "target mix r in [0,1]");
    bind_option(fairpca_app, fairpca.reg, "epsilon", fairpca.epsilon, "bisection tolerance");
    bind_option(fairpca_app, fairpca.reg, "lambda-init", fairpca.lambda_init, "initial lambda");
    bind_option(fairpca_app, fairpca.reg, "max-doublings", fairpca.max_doublings, "doubling budget");
    bind_option(fairpca_app, fairpca.reg, "steps", fairpca.steps, "projected-gradient steps");
    bind_option(fairpca_app, fairpca.reg, "step-size", fairpca.step_size, "gradient step size");

    LabelShiftCmd labelshift;
    CLI::App* labelshift_app =
        app.add_subcommand("labelshift", "train/test shift experiment on synthetic data");
    bind_globals(labelshift_app, labelshift.reg, labelshift.g);
    bind_solver(labelshift_app, labelshift.reg, labelshift.solver, true);
    bind_option(labelshift_app, labelshift.reg, "train-pos", labelshift.train_pos,
                "training positive share p");
    bind_option(labelshift_app, labelshift.reg, "target-kl", labelshift.target_kl,
                "KL divergence of the test label shift");
    bind_option(labelshift_app, labelshift.reg, "train-size", labelshift.train_size, "train rows");
    bind_option(labelshift_app, labelshift.reg, "test-size", labelshift.test_size, "test rows");
    bind_option(labelshift_app, labelshift.reg, "separation", labelshift.separation,
                "class mean separation");
    bind_option(labelshift_app, labelshift.reg, "noise", labelshift.noise, "feature noise sigma");
    bind_option(labelshift_app, labelshift.reg, "threshold", labelshift.threshold,
                "classification threshold");
    bind_option(labelshift_app, labelshift.reg, "alpha", labelshift.alpha, "rank-error tail level");

    LongTailCmd longtail;
    CLI::App* longtail_app = app.add_subcommand("longtail", "geometric long-tail downsampling");
    bind_globals(longtail_app, longtail.reg, longtail.g);
    bind_option(longtail_app, longtail.reg, "data", longtail.data_path, "input CSV path");
    bind_option(longtail_app, longtail.reg, "features", longtail.features, "feature column names");
    bind_option(longtail_app, longtail.reg, "label", longtail.label, "label column name");
    bind_option(longtail_app, longtail.reg, "group", longtail.group, "group column name");
    bind_option(longtail_app, longtail.reg, "rho", longtail.rho, "rarest/most-common size ratio");
    bind_option(longtail_app, longtail.reg, "classes", longtail.classes, "synthetic class count");
    bind_option(longtail_app, longtail.reg, "per-class", longtail.per_class,
                "synthetic rows per class");
    bind_option(longtail_app, longtail.reg, "out-data", longtail.out_data,
                "write the downsampled CSV here");

    ToyCmd toy;
    CLI::App* toy_app = app.add_subcommand("toy", "two-cluster Gaussian target sweep");
    bind_globals(toy_app, toy.reg, toy.g);
    bind_solver(toy_app, toy.reg, toy.solver, true);
    bind_option(toy_app, toy.reg, "tau-sweep", toy.tau_sweep, "grid size over [mean, max]");

    GuaranteesCmd guarantees;
    CLI::App* guarantees_app =
        app.add_subcommand("guarantees", "confidence and radius calculators");
    bind_globals(guarantees_app, guarantees.reg, guarantees.g);
    bind_option(guarantees_app, guarantees.reg, "lambda", guarantees.lambda, "fragility lambda");
    bind_option(guarantees_app, guarantees.reg, "alpha", guarantees.alpha, "tail offset alpha");
    bind_option(guarantees_app, guarantees.reg, "k", guarantees.k, "support size K");
    bind_option(guarantees_app, guarantees.reg, "n", guarantees.n, "sample count N");
    bind_option(guarantees_app, guarantees.reg, "r", guarantees.r, "KL radius r");
    bind_option(guarantees_app, guarantees.reg, "c", guarantees.c, "loss range C");
    bind_option(guarantees_app, guarantees.reg, "k-cap", guarantees.k_cap,
                "discretization scan cap");
    bind_option(guarantees_app, guarantees.reg, "target", guarantees.target,
                "required confidence level");
    bind_option(guarantees_app, guarantees.reg, "delta", guarantees.delta, "failure probability");
    bind_option(guarantees_app, guarantees.reg, "expected-kl", guarantees.expected_kl,
                "estimated E[KL] plug-in");
    bind_option(guarantees_app, guarantees.reg, "p-true", guarantees.p_true,
                "true distribution for Monte Carlo runs");
    bind_option(guarantees_app, guarantees.reg, "mc-n", guarantees.mc_n, "Monte Carlo sample size");
    bind_option(guarantees_app, guarantees.reg, "mc-trials", guarantees.mc_trials,
                "Monte Carlo trial count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (solve_app->parsed()) {
            apply_config(solve.g, solve.reg);
            solve.run();
        } else if (hsolve_app->parsed()) {
            apply_config(hsolve.g, hsolve.reg);
            hsolve.run();
        } else if (fairpca_app->parsed()) {
            apply_config(fairpca.g, fairpca.reg);
            fairpca.run();
        } else if (labelshift_app->parsed()) {
            apply_config(labelshift.g, labelshift.reg);
            labelshift.run();
        } else if (longtail_app->parsed()) {
            apply_config(longtail.g, longtail.reg);
            longtail.run();
        } else if (toy_app->parsed()) {
            apply_config(toy.g, toy.reg);
            toy.run();
        } else if (guarantees_app->parsed()) {
            apply_config(guarantees.g, guarantees.reg);
            guarantees.run();
        }
    } catch (const klrs::InfeasibleTargetError& e) {
        std::cerr << "infeasible target: " << e.what() << "\n";
        return 2;
    } catch (const klrs::UnreachableDivergenceError& e) {
        std::cerr << "infeasible target: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
