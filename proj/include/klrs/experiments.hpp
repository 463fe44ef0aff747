#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "klrs/hierarchical.hpp"
#include "klrs/models.hpp"
#include "klrs/solver.hpp"

namespace klrs {

struct ConfusionCounts {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::int64_t total() const { return tp + tn + fp + fn; }
};

/// Classification metrics plus rank-error tail statistics at level alpha.
struct MetricsReport {
    double acc = 0.0;
    double acc_pos = 0.0;
    double acc_neg = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double rank_error_var = 0.0;
    double rank_error_cvar = 0.0;
};

/// 100 two-dimensional points: 80 from N((-1,2), 0.4I) then 20 from
/// N((0.2,0.2), 0.6I). Labels and group ids mark the cluster (0 = majority).
Dataset gen_two_gaussian_toy(std::uint64_t seed);

/// Binary classification draws: n_pos points N((m,m), noise^2 I) labeled 1
/// followed by n_neg points N((-m,-m), noise^2 I) labeled 0, m = separation.
Dataset gen_binary_gaussian(std::uint64_t seed, std::size_t n_pos, std::size_t n_neg,
                            double separation, double noise);

/// Positive share q > p with KL((q,1-q) || (p,1-p)) = target_kl, by bisection
/// on (p, 1) to interval 1e-12; q = p when target_kl = 0. Targets at or above
/// -log(p) raise UnreachableDivergenceError.
double label_shift_proportions(double train_pos_frac, double target_kl);

/// Geometric class schedule: rank classes by size descending (ties by label),
/// keep floor(n_max * rho^(c/(C-1))) of rank c, uniformly subsampled per seed.
/// A class driven to zero raises DegenerateClassError.
Dataset long_tail_downsample(const Dataset& data, double rho, std::uint64_t seed);

ConfusionCounts confusion_counts(const std::vector<double>& scores, const std::vector<int>& labels,
                                 double threshold);

/// Thresholded confusion metrics (prediction 1 iff score >= threshold) plus
/// VaR/CVaR of the pairwise rank errors score(neg) - score(pos). VaR is the
/// lower alpha-quantile over all P*N pairs; CVaR averages errors >= VaR.
/// Requires both classes present.
MetricsReport metrics_from_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                                  double threshold, double alpha);

/// Loss-spread summary of an ERM solution, feeding target selection.
struct ErmLossStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double var = 0.0;
};

ErmLossStats erm_loss_stats(const std::vector<double>& losses);

enum class TauStrategy { kScaleErm, kMinmaxMix, kMeanPlusVar };

/// scale_erm: a * mean (a >= 1). minmax_mix: a * max + (1-a) * min (a in
/// [0,1]), raising InfeasibleTargetError below the mean. mean_plus_var:
/// mean + a * var (a >= 0).
double select_tau(TauStrategy strategy, double a, const ErmLossStats& stats);

struct FairPcaConfig {
    double epsilon = 1e-4;
    double lambda_init = 1.0;
    int max_doublings = 60;
    int steps = 400;        // projected-gradient steps per feasibility check
    double step_size = 0.1;

    void validate() const;
};

struct FairPcaResult {
    Matrix u;                          // n x d, orthonormal columns
    std::vector<double> group_losses;  // per-group reconstruction loss at u
    double lambda_star = 0.0;
    double tau = 0.0;
    std::vector<TraceEntry> trace;
};

/// KL-RS PCA: tau = r * max + (1-r) * min of the per-group losses of the
/// pooled top-d subspace, then bisection on lambda with a projected-gradient
/// (thin-QR retraction) feasibility oracle over orthonormal U. Group weights
/// are row counts over the total.
FairPcaResult fair_pca_run(const std::vector<Matrix>& groups, int d, double r,
                           const FairPcaConfig& cfg);

/// Column selection for CSV datasets; empty label/group names mean absent.
struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::string label_column;
    std::string group_column;

    static CsvSchema defaults_for(const Dataset& data);
};

/// Header-row CSV with comma separators; features parse as decimal floats,
/// label and group columns as integers (group ids remapped to 0..G-1 in
/// ascending id order). Malformed input raises ParseError with path:line.
Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema);

void write_csv_dataset(const std::string& path, const Dataset& data, const CsvSchema& schema);

using ConfigValue = std::variant<bool, std::uint64_t, double, std::string>;
using ConfigMap = std::map<std::string, ConfigValue>;

struct ReportResult {
    ParameterVector theta;
    std::optional<double> lambda1;
    std::optional<double> lambda2;
};

/// Everything a run emits: the echoed config, the lambda search trace, the
/// solution, and optional metric/guarantee blocks (omitted when empty).
struct Report {
    ConfigMap config;
    std::vector<TraceEntry> trace;
    ReportResult result;
    std::map<std::string, double> metrics;
    std::map<std::string, double> guarantees;
};

/// format "json": sorted-key object; floats use the shortest round-trip
/// decimal form and non-finite values serialize as null. format "csv": the
/// flat trace projection "lambda,objective,feasible" plus one row per entry.
std::string render_report(const Report& report, const std::string& format);

/// render_report written to path; I/O failures raise with the path named.
void emit_report(const Report& report, const std::string& format, const std::string& path);

}  // namespace klrs
