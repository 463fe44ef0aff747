#include "klrs/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "klrs/rng.hpp"

namespace klrs {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// RNG stream ids (solver uses 1-3).
constexpr std::uint64_t kToyStream = 0;
constexpr std::uint64_t kLongTailStream = 4;
constexpr std::uint64_t kBinaryStream = 5;

double normal_draw(std::mt19937_64& rng, std::normal_distribution<double>& nd, double mu,
                   double sigma) {
    return mu + sigma * nd(rng);
}

std::string shortest(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

Dataset gen_two_gaussian_toy(std::uint64_t seed) {
    Dataset data;
    std::mt19937_64 rng = seeded_engine(seed, kToyStream);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double s1 = std::sqrt(0.4);
    const double s2 = std::sqrt(0.6);
    for (int i = 0; i < 80; ++i) {
        const double x = normal_draw(rng, nd, -1.0, s1);
        const double y = normal_draw(rng, nd, 2.0, s1);
        data.features.push_back({x, y});
        data.labels.push_back(0.0);
        data.group_ids.push_back(0);
    }
    for (int i = 0; i < 20; ++i) {
        const double x = normal_draw(rng, nd, 0.2, s2);
        const double y = normal_draw(rng, nd, 0.2, s2);
        data.features.push_back({x, y});
        data.labels.push_back(1.0);
        data.group_ids.push_back(1);
    }
    return data;
}

Dataset gen_binary_gaussian(std::uint64_t seed, std::size_t n_pos, std::size_t n_neg,
                            double separation, double noise) {
    require(n_pos >= 1 && n_neg >= 1, "both classes must be nonempty");
    require(std::isfinite(separation) && std::isfinite(noise) && noise > 0.0,
            "separation must be finite and noise positive");
    Dataset data;
    std::mt19937_64 rng = seeded_engine(seed, kBinaryStream);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t i = 0; i < n_pos; ++i) {
        data.features.push_back({normal_draw(rng, nd, separation, noise),
                                 normal_draw(rng, nd, separation, noise)});
        data.labels.push_back(1.0);
    }
    for (std::size_t i = 0; i < n_neg; ++i) {
        data.features.push_back({normal_draw(rng, nd, -separation, noise),
                                 normal_draw(rng, nd, -separation, noise)});
        data.labels.push_back(0.0);
    }
    return data;
}

double label_shift_proportions(double train_pos_frac, double target_kl) {
    const double p = train_pos_frac;
    require(std::isfinite(p) && p > 0.0 && p < 1.0, "train_pos_frac must lie in (0,1)");
    require(std::isfinite(target_kl) && target_kl >= 0.0, "target_kl must be >= 0");
    if (target_kl == 0.0) return p;
    const double max_kl = -std::log(p);
    if (target_kl >= max_kl) {
        throw UnreachableDivergenceError("target_kl " + std::to_string(target_kl) +
                                         " is unreachable; the shift saturates at " +
                                         std::to_string(max_kl));
    }
    const auto kl2 = [&](double q) {
        double v = q * std::log(q / p);
        if (q < 1.0) v += (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
        return v;
    };
    double lo = p, hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (kl2(mid) < target_kl) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Dataset long_tail_downsample(const Dataset& data, double rho, std::uint64_t seed) {
    data.validate();
    require(!data.labels.empty(), "long_tail_downsample needs labels");
    require(std::isfinite(rho) && rho > 0.0 && rho <= 1.0, "rho must lie in (0,1]");

    std::map<double, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.n(); ++i) by_label[data.labels[i]].push_back(i);
    require(by_label.size() >= 2, "long_tail_downsample needs at least 2 classes");

    // Rank by size descending; the map order breaks ties by label ascending.
    std::vector<std::pair<double, std::vector<std::size_t>>> classes(by_label.begin(),
                                                                     by_label.end());
    std::stable_sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) {
        return a.second.size() > b.second.size();
    });

    const double c_count = static_cast<double>(classes.size());
    const double n_max = static_cast<double>(classes.front().second.size());
    std::mt19937_64 rng = seeded_engine(seed, kLongTailStream);

    Dataset out;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const double sched =
            n_max * std::pow(rho, static_cast<double>(c) / (c_count - 1.0));
        std::size_t keep = static_cast<std::size_t>(std::floor(sched + 1e-9));
        auto& idx = classes[c].second;
        keep = std::min(keep, idx.size());
        if (keep == 0) {
            throw DegenerateClassError("class with label " + shortest(classes[c].first) +
                                       " would keep 0 samples");
        }
        for (std::size_t i = 0; i < keep; ++i) {
            const std::size_t j = i + uniform_index(rng, idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
            out.features.push_back(data.features[i]);
            out.labels.push_back(data.labels[i]);
            if (!data.group_ids.empty()) out.group_ids.push_back(data.group_ids[i]);
        }
    }
    return out;
}

ConfusionCounts confusion_counts(const std::vector<double>& scores, const std::vector<int>& labels,
                                 double threshold) {
    require(scores.size() == labels.size(), "scores and labels must have equal length");
    require(!scores.empty(), "scores must be nonempty");
    require(std::isfinite(threshold), "threshold must be finite");
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        require(labels[i] == 0 || labels[i] == 1, "labels must be 0/1");
        require(std::isfinite(scores[i]), "scores must be finite");
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) {
            pred ? ++c.tp : ++c.fn;
        } else {
            pred ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

MetricsReport metrics_from_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                                  double threshold, double alpha) {
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    const ConfusionCounts c = confusion_counts(scores, labels, threshold);
    const double pos = static_cast<double>(c.tp + c.fn);
    const double neg = static_cast<double>(c.tn + c.fp);
    require(pos >= 1.0 && neg >= 1.0, "rank metrics need both classes present");

    MetricsReport m;
    m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    m.acc_pos = static_cast<double>(c.tp) / pos;
    m.acc_neg = static_cast<double>(c.tn) / neg;
    m.f1 = 2.0 * static_cast<double>(c.tp) /
           static_cast<double>(2 * c.tp + c.fp + c.fn);

    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double den2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = den2 > 0.0 ? (tp * tn - fp * fn) / std::sqrt(den2) : 0.0;

    std::vector<double> errs;
    errs.reserve(static_cast<std::size_t>(pos * neg));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 0) errs.push_back(scores[j] - scores[i]);
        }
    }
    std::sort(errs.begin(), errs.end());
    const double md = static_cast<double>(errs.size());
    // Lower quantile: smallest k with k/M >= alpha; the 1e-9 absorbs FP fuzz
    // in alpha*M at integer boundaries.
    std::size_t k = static_cast<std::size_t>(std::ceil(alpha * md - 1e-9));
    k = std::clamp<std::size_t>(k, 1, errs.size());
    m.rank_error_var = errs[k - 1];
    const auto tail = std::lower_bound(errs.begin(), errs.end(), m.rank_error_var);
    double sum = 0.0;
    for (auto it = tail; it != errs.end(); ++it) sum += *it;
    m.rank_error_cvar = sum / static_cast<double>(errs.end() - tail);
    return m;
}

ErmLossStats erm_loss_stats(const std::vector<double>& losses) {
    require(!losses.empty(), "losses must be nonempty");
    ErmLossStats s;
    s.min = losses[0];
    s.max = losses[0];
    double sum = 0.0;
    for (double l : losses) {
        require(std::isfinite(l), "losses must be finite");
        s.min = std::min(s.min, l);
        s.max = std::max(s.max, l);
        sum += l;
    }
    s.mean = sum / static_cast<double>(losses.size());
    double sq = 0.0;
    for (double l : losses) sq += (l - s.mean) * (l - s.mean);
    s.var = sq / static_cast<double>(losses.size());
    return s;
}

double select_tau(TauStrategy strategy, double a, const ErmLossStats& stats) {
    require(std::isfinite(a), "a must be finite");
    switch (strategy) {
        case TauStrategy::kScaleErm:
            require(a >= 1.0, "scale_erm needs a >= 1");
            return a * stats.mean;
        case TauStrategy::kMinmaxMix: {
            require(a >= 0.0 && a <= 1.0, "minmax_mix needs a in [0,1]");
            const double tau = a * stats.max + (1.0 - a) * stats.min;
            if (tau < stats.mean) {
                throw InfeasibleTargetError("minmax_mix: tau " + std::to_string(tau) +
                                            " falls below the mean loss " +
                                            std::to_string(stats.mean));
            }
            return tau;
        }
        case TauStrategy::kMeanPlusVar:
            require(a >= 0.0, "mean_plus_var needs a >= 0");
            return stats.mean + a * stats.var;
    }
    throw std::invalid_argument("unknown tau strategy");
}

void FairPcaConfig::validate() const {
    require(epsilon > 0.0, "epsilon must be positive");
    require(lambda_init > 0.0, "lambda_init must be positive");
    require(max_doublings >= 0, "max_doublings must be >= 0");
    require(steps >= 1, "steps must be >= 1");
    require(step_size > 0.0, "step_size must be positive");
}

namespace {

struct PcaProblem {
    std::vector<Matrix> s;          // per-group grams
    std::vector<double> topd;       // sum of top-d eigenvalues per group
    std::vector<double> rows;       // group sizes
    std::vector<double> log_w;      // log group weights
    double tau = 0.0;
    int d = 0;

    double loss(const Matrix& u, std::size_t g) const {
        return (topd[g] - trace_quad(s[g], u)) / rows[g];
    }
};

struct PcaCheck {
    bool feasible;
    double statistic;
};

// Projected gradient on the group surrogate mean, thin-QR retraction; the
// verdict is the exact log-space statistic at the final iterate.
PcaCheck pca_feasibility(const PcaProblem& p, double lambda, const FairPcaConfig& cfg, Matrix& u) {
    const std::size_t gc = p.s.size();
    std::vector<double> e(gc);
    const auto fill_exponents = [&](const Matrix& uu) {
        double emax = -std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < gc; ++g) {
            e[g] = p.log_w[g] + (p.loss(uu, g) - p.tau) / lambda;
            emax = std::max(emax, e[g]);
        }
        return emax;
    };
    for (int t = 0; t < cfg.steps; ++t) {
        const double emax = fill_exponents(u);
        double z = 0.0;
        for (std::size_t g = 0; g < gc; ++g) z += std::exp(e[g] - emax);
        Matrix grad(u.rows, u.cols);
        for (std::size_t g = 0; g < gc; ++g) {
            const double c = std::exp(e[g] - emax) / z;
            const Matrix su = matmul(p.s[g], u);
            const double scale = -2.0 * c / p.rows[g];
            for (std::size_t i = 0; i < grad.a.size(); ++i) grad.a[i] += scale * su.a[i];
        }
        Matrix trial = u;
        for (std::size_t i = 0; i < trial.a.size(); ++i) trial.a[i] -= cfg.step_size * grad.a[i];
        u = qr_orthonormalize(trial);
    }
    const double emax = fill_exponents(u);
    double z = 0.0;
    for (std::size_t g = 0; g < gc; ++g) z += std::exp(e[g] - emax);
    const double log_stat = emax + std::log(z);
    // The slack absorbs rounding when a group sits exactly on the target
    // (r = 1 single-group instances); well inside the 1e-3 reporting slack.
    return PcaCheck{log_stat <= 1e-10, std::exp(log_stat)};
}

}  // namespace

FairPcaResult fair_pca_run(const std::vector<Matrix>& groups, int d, double r,
                           const FairPcaConfig& cfg) {
    cfg.validate();
    require(!groups.empty(), "fair_pca_run needs at least one group");
    require(r >= 0.0 && r <= 1.0, "r must lie in [0,1]");
    const std::size_t n = groups[0].cols;
    require(d >= 1 && static_cast<std::size_t>(d) < n, "need 1 <= d < feature count");

    PcaProblem p;
    p.d = d;
    p.tau = 0.0;
    double m = 0.0;
    Matrix s_pool(n, n);
    for (const Matrix& g : groups) {
        require(g.cols == n, "groups must share the feature width");
        require(g.rows >= 1, "groups must be nonempty");
        m += static_cast<double>(g.rows);
    }
    for (const Matrix& g : groups) {
        Matrix s = gram(g);
        for (std::size_t i = 0; i < s.a.size(); ++i) s_pool.a[i] += s.a[i];
        const EighResult eig = symmetric_eigh(s);
        double top = 0.0;
        for (int i = 0; i < d; ++i) top += eig.values[i];
        p.s.push_back(std::move(s));
        p.topd.push_back(top);
        p.rows.push_back(static_cast<double>(g.rows));
        p.log_w.push_back(std::log(static_cast<double>(g.rows) / m));
    }

    const EighResult pool = symmetric_eigh(s_pool);
    Matrix u(n, static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) u(i, j) = pool.vectors(i, static_cast<std::size_t>(j));
    }

    double lbar = -std::numeric_limits<double>::infinity();
    double lmin = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < p.s.size(); ++g) {
        const double l = p.loss(u, g);
        lbar = std::max(lbar, l);
        lmin = std::min(lmin, l);
    }
    p.tau = r * lbar + (1.0 - r) * lmin;

    FairPcaResult res;
    res.tau = p.tau;
    const double floor = p.tau > 0.0 ? 1e-8 * p.tau : 1e-12;

    double lo = 0.0;
    double hi = cfg.lambda_init;
    PcaCheck ck = pca_feasibility(p, hi, cfg, u);
    res.trace.push_back({hi, ck.statistic, ck.feasible});
    int doublings = 0;
    while (!ck.feasible) {
        if (doublings++ >= cfg.max_doublings) {
            throw InfeasibleTargetError("fair_pca_run: target infeasible after " +
                                        std::to_string(cfg.max_doublings) + " doublings");
        }
        lo = hi;
        hi *= 2.0;
        ck = pca_feasibility(p, hi, cfg, u);
        res.trace.push_back({hi, ck.statistic, ck.feasible});
    }
    Matrix u_best = u;
    while (hi - lo > cfg.epsilon) {
        const double mid = std::max(0.5 * (lo + hi), floor);
        if (mid >= hi) break;
        ck = pca_feasibility(p, mid, cfg, u);
        res.trace.push_back({mid, ck.statistic, ck.feasible});
        if (ck.feasible) {
            hi = mid;
            u_best = u;
        } else {
            lo = mid;
        }
    }

    res.u = std::move(u_best);
    for (std::size_t g = 0; g < p.s.size(); ++g) res.group_losses.push_back(p.loss(res.u, g));
    res.lambda_star = hi;
    return res;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, const std::string& path, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        parse_fail(path, line, "bad numeric field '" + s + "'");
    }
    if (!std::isfinite(v)) parse_fail(path, line, "non-finite field '" + s + "'");
    return v;
}

long long parse_int(const std::string& s, const std::string& path, std::size_t line) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        parse_fail(path, line, "bad integer field '" + s + "'");
    }
    return v;
}

}  // namespace

CsvSchema CsvSchema::defaults_for(const Dataset& data) {
    CsvSchema schema;
    for (std::size_t j = 0; j < data.width(); ++j) schema.feature_columns.push_back("x" + std::to_string(j));
    if (!data.labels.empty()) schema.label_column = "y";
    if (!data.group_ids.empty()) schema.group_column = "g";
    return schema;
}

Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema) {
    require(!schema.feature_columns.empty(), "schema needs at least one feature column");
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_fields(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (!col.emplace(header[j], j).second) {
            parse_fail(path, 1, "duplicate column '" + header[j] + "'");
        }
    }
    const auto resolve = [&](const std::string& name) {
        const auto it = col.find(name);
        if (it == col.end()) parse_fail(path, 1, "unknown column '" + name + "'");
        return it->second;
    };
    std::vector<std::size_t> fidx;
    for (const std::string& name : schema.feature_columns) fidx.push_back(resolve(name));
    const bool want_label = !schema.label_column.empty();
    const bool want_group = !schema.group_column.empty();
    const std::size_t lidx = want_label ? resolve(schema.label_column) : 0;
    const std::size_t gidx = want_group ? resolve(schema.group_column) : 0;

    Dataset data;
    std::vector<long long> raw_groups;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            parse_fail(path, lineno,
                       "expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()));
        }
        std::vector<double> row;
        for (std::size_t j : fidx) row.push_back(parse_double(fields[j], path, lineno));
        data.features.push_back(std::move(row));
        if (want_label) {
            data.labels.push_back(static_cast<double>(parse_int(fields[lidx], path, lineno)));
        }
        if (want_group) raw_groups.push_back(parse_int(fields[gidx], path, lineno));
    }
    if (data.features.empty()) throw ParseError(path + ": no data rows");

    if (want_group) {
        std::vector<long long> ids = raw_groups;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (long long g : raw_groups) {
            const auto it = std::lower_bound(ids.begin(), ids.end(), g);
            data.group_ids.push_back(static_cast<int>(it - ids.begin()));
        }
    }
    data.validate();
    return data;
}

void write_csv_dataset(const std::string& path, const Dataset& data, const CsvSchema& schema) {
    data.validate();
    require(schema.feature_columns.size() == data.width(),
            "schema feature columns must match the dataset width");
    require(schema.label_column.empty() == data.labels.empty(),
            "schema label column must match label presence");
    require(schema.group_column.empty() == data.group_ids.empty(),
            "schema group column must match group presence");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);

    std::string header;
    for (const std::string& name : schema.feature_columns) {
        if (!header.empty()) header += ',';
        header += name;
    }
    if (!schema.label_column.empty()) header += ',' + schema.label_column;
    if (!schema.group_column.empty()) header += ',' + schema.group_column;
    out << header << '\n';

    for (std::size_t i = 0; i < data.n(); ++i) {
        std::string row;
        for (double x : data.features[i]) {
            if (!row.empty()) row += ',';
            row += shortest(x);
        }
        if (!data.labels.empty()) row += ',' + shortest(data.labels[i]);
        if (!data.group_ids.empty()) row += ',' + std::to_string(data.group_ids[i]);
        out << row << '\n';
    }
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
}

namespace {

nlohmann::json config_to_json(const ConfigMap& config) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : config) {
        std::visit([&](const auto& v) { j[key] = v; }, value);
    }
    return j;
}

}  // namespace

std::string render_report(const Report& report, const std::string& format) {
    if (format == "json") {
        nlohmann::json j;
        j["config"] = config_to_json(report.config);
        nlohmann::json trace = nlohmann::json::array();
        for (const TraceEntry& t : report.trace) {
            trace.push_back({{"lambda", t.lambda}, {"objective", t.objective},
                             {"feasible", t.feasible}});
        }
        j["trace"] = std::move(trace);
        nlohmann::json result;
        result["theta"] = report.result.theta;
        if (report.result.lambda1) result["lambda1"] = *report.result.lambda1;
        if (report.result.lambda2) result["lambda2"] = *report.result.lambda2;
        j["result"] = std::move(result);
        if (!report.metrics.empty()) j["metrics"] = report.metrics;
        if (!report.guarantees.empty()) j["guarantees"] = report.guarantees;
        return j.dump(2) + "\n";
    }
    if (format == "csv") {
        std::string out = "lambda,objective,feasible\n";
        for (const TraceEntry& t : report.trace) {
            out += shortest(t.lambda) + ',' + shortest(t.objective) + ',' +
                   (t.feasible ? "1" : "0") + '\n';
        }
        return out;
    }
    throw std::invalid_argument("unknown report format '" + format + "'");
}

void emit_report(const Report& report, const std::string& format, const std::string& path) {
    const std::string body = render_report(report, format);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << body;
    if (!out) throw std::runtime_error("cannot write report: " + path);
}

}  // namespace klrs
