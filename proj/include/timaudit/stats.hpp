#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "timaudit/code_analysis.hpp"
#include "timaudit/metrics.hpp"
#include "timaudit/numeric.hpp"

namespace timaudit::stats {

// ---- correlation --------------------------------------------------------------

enum class Significance { None, Marginal, Significant };

std::string to_string(Significance s);

struct CorrelationResult {
    std::string x_label;
    std::string y_label;
    double r = 0.0;
    int n = 0;
    double p_value = 1.0;
    Significance significance = Significance::None;
};

// Product-moment coefficient. Inputs must be same-length (>= 3) and neither
// constant.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Two-sided p for the null r = 0: with v = n - 2 and t = r * sqrt(v / (1 - r^2)),
// p = I_{v/(v+t^2)}(v/2, 1/2), the regularized incomplete beta function.
double p_value_two_sided(double r, int n);

// Exposed for oracle testing: I_x(a, b) to absolute tolerance 1e-10.
double regularized_incomplete_beta(double a, double b, double x);

// Significant below 0.05, Marginal in [0.05, 0.10), None from 0.10 up.
Significance classify_significance(double p);

// ---- tool-call bins -------------------------------------------------------------

inline constexpr const char* kBinLabels[] = {"0-3", "4-7", "8-11", "12+"};

// Total over non-negative counts: 0-3, 4-7, 8-11, 12+.
std::string bin_of(int tool_calls);

struct BinRow {
    std::string model_id;
    std::string bin;
    std::int64_t pair_count = 0;
    std::optional<Rat> win_rate;  // for the tool-using side of each pair
    std::int64_t miss_count = 0;
    std::optional<Rat> mean_miss_rate;
    std::int64_t prm_count = 0;
    std::optional<Rat> prm_accuracy;
};

// Joins each verdict to its transcript's complexity profile and aggregates
// per (model, bin). Pair verdicts join through their non-Base side. All four
// bins are emitted per model; empty ones carry no values.
std::vector<BinRow> binned_metrics(
    const std::vector<metrics::PairVerdict>& pairs,
    const std::vector<metrics::MissVerdict>& misses,
    const std::vector<metrics::PrmVerdict>& prms,
    const std::vector<code_analysis::ComplexityProfile>& profiles);

// ---- complexity correlation ------------------------------------------------------

struct CorrelationOutcome {
    std::string model_id;
    std::string metric;  // "loc" or "cc"
    std::optional<CorrelationResult> result;
    std::string failure;  // reason when result is absent
    std::vector<std::pair<double, double>> points;  // (complexity, miss rate)
};

// Per model, over tool-using transcripts that have both a profile and a miss
// verdict: correlates mean lines per block and mean cyclomatic complexity
// per block against miss rate. Degenerate or undersized inputs surface as
// failed outcomes rather than aborting other models.
std::vector<CorrelationOutcome> correlate_complexity(
    const std::vector<code_analysis::ComplexityProfile>& profiles,
    const std::vector<metrics::MissVerdict>& misses);

// ---- error-taxonomy deltas -------------------------------------------------------

struct ErrorDelta {
    std::string model_id;
    std::int64_t n = 0;  // both-correct intersection size
    Rat logic{0, 1};
    Rat assumption{0, 1};
    Rat creativity{0, 1};
    Rat algebra_arithmetic{0, 1};
    Rat none_of_the_above{0, 1};
};

// Per-model category-rate difference, TaLM minus Base, over the given
// both-correct problem ids. Every id needs a profile on both sides.
std::vector<ErrorDelta> error_deltas(
    const std::vector<metrics::ErrorProfile>& base_profiles,
    const std::vector<metrics::ErrorProfile>& talm_profiles,
    const std::map<std::string, std::set<std::string>>& both_correct_ids);

// ---- aggregate tables ------------------------------------------------------------

struct TableRow {
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    std::optional<std::int64_t> final_acc;  // percent tenths, e.g. 456 = 45.6%
    std::optional<std::int64_t> miss_rate;
    std::optional<std::int64_t> win_rate;
    std::optional<std::int64_t> prm_acc;
};

struct MetricsTable {
    std::vector<TableRow> rows;      // sorted by (model_id, variant)
    std::vector<TableRow> averages;  // one per variant, model_id = "Average"
};

struct VerdictStore {
    std::vector<metrics::FinalVerdict> finals;
    std::vector<metrics::PairVerdict> pairs;
    std::vector<metrics::MissVerdict> misses;
    std::vector<metrics::PrmVerdict> prms;
    std::vector<metrics::ErrorProfile> profiles;
};

// One row per (model, variant) seen in the final verdicts; cells rounded
// half-up to one decimal on exact integers. A variant's win-rate cell pairs
// it against Base (Base itself pairs against TaLM) and is empty when no such
// pairs exist. Average rows are unweighted means of the rounded model cells.
MetricsTable aggregate_table(const VerdictStore& store);

}  // namespace timaudit::stats
