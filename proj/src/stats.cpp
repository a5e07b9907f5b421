#include "timaudit/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

#include "timaudit/errors.hpp"

namespace timaudit::stats {

using corpus::Variant;
using metrics::ErrorProfile;
using metrics::MissVerdict;
using metrics::PairVerdict;
using metrics::PrmVerdict;

// ---- correlation --------------------------------------------------------------

std::string to_string(Significance s) {
    switch (s) {
        case Significance::None: return "none";
        case Significance::Marginal: return "marginal";
        case Significance::Significant: return "significant";
    }
    return "none";
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        raise(errc::length_mismatch,
              "pearson over " + std::to_string(xs.size()) + " xs and " +
                  std::to_string(ys.size()) + " ys");
    }
    auto n = static_cast<double>(xs.size());
    if (xs.size() < 3) {
        raise(errc::insufficient_data, "pearson needs at least 3 observations");
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mx;
        double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        raise(errc::degenerate_variance, "pearson over a constant series");
    }
    double r = sxy / std::sqrt(sxx * syy);
    // guard the FP boundary so downstream sqrt(1 - r^2) stays real
    return std::clamp(r, -1.0, 1.0);
}

namespace {

// Continued-fraction core of the incomplete beta function (modified Lentz).
double beta_cont_frac(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-15;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    raise(errc::domain_error, "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0 || b <= 0) {
        raise(errc::domain_error, "incomplete beta needs positive parameters");
    }
    if (x < 0 || x > 1) {
        raise(errc::domain_error, "incomplete beta argument outside [0,1]");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(log_front);
    // the continued fraction converges fast for x below the distribution bulk
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cont_frac(a, b, x) / a;
    }
    return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

double p_value_two_sided(double r, int n) {
    if (n < 3) raise(errc::domain_error, "p-value needs n >= 3");
    if (std::fabs(r) > 1.0) raise(errc::domain_error, "|r| > 1");
    if (r == 0.0) return 1.0;
    if (std::fabs(r) == 1.0) return 0.0;
    double v = n - 2;
    double t2 = r * r * v / (1.0 - r * r);
    // two-sided tail of the central t distribution with v degrees of freedom
    return regularized_incomplete_beta(v / 2.0, 0.5, v / (v + t2));
}

Significance classify_significance(double p) {
    if (p < 0.0 || p > 1.0) raise(errc::domain_error, "p outside [0,1]");
    if (p < 0.05) return Significance::Significant;
    if (p < 0.10) return Significance::Marginal;
    return Significance::None;
}

// ---- tool-call bins -------------------------------------------------------------

std::string bin_of(int tool_calls) {
    if (tool_calls < 0) raise(errc::precondition, "negative tool-call count");
    if (tool_calls <= 3) return kBinLabels[0];
    if (tool_calls <= 7) return kBinLabels[1];
    if (tool_calls <= 11) return kBinLabels[2];
    return kBinLabels[3];
}

namespace {

using ProfileKey = std::tuple<std::string, std::string, Variant>;

std::map<ProfileKey, const code_analysis::ComplexityProfile*> index_profiles(
    const std::vector<code_analysis::ComplexityProfile>& profiles) {
    std::map<ProfileKey, const code_analysis::ComplexityProfile*> idx;
    for (const auto& p : profiles) {
        idx[{p.problem_id, p.model_id, p.variant}] = &p;
    }
    return idx;
}

const code_analysis::ComplexityProfile& join_profile(
    const std::map<ProfileKey, const code_analysis::ComplexityProfile*>& idx,
    const std::string& pid, const std::string& mid, Variant var,
    const char* what) {
    auto it = idx.find({pid, mid, var});
    if (it == idx.end()) {
        raise(errc::join_failure, std::string(what) + " for " + pid + "/" + mid +
                                      "/" + corpus::to_string(var) +
                                      " has no complexity profile");
    }
    return *it->second;
}

Variant tool_side(const PairVerdict& v) {
    bool a_base = v.side_a == Variant::Base;
    bool b_base = v.side_b == Variant::Base;
    if (a_base == b_base) {
        raise(errc::precondition, "pair for " + v.problem_id +
                                      " must have exactly one Base side");
    }
    return a_base ? v.side_b : v.side_a;
}

}  // namespace

std::vector<BinRow> binned_metrics(
    const std::vector<PairVerdict>& pairs, const std::vector<MissVerdict>& misses,
    const std::vector<PrmVerdict>& prms,
    const std::vector<code_analysis::ComplexityProfile>& profiles) {
    auto idx = index_profiles(profiles);

    struct Acc {
        std::int64_t pair_n = 0, pair_wins = 0;
        std::vector<MissVerdict> miss;
        std::vector<PrmVerdict> prm;
    };
    std::map<std::pair<std::string, std::string>, Acc> groups;
    std::set<std::string> models;

    for (const auto& v : pairs) {
        Variant side = tool_side(v);
        const auto& prof =
            join_profile(idx, v.problem_id, v.model_id, side, "pair verdict");
        Acc& acc = groups[{v.model_id, bin_of(prof.tool_calls)}];
        ++acc.pair_n;
        if (v.winning_variant() == side) ++acc.pair_wins;
        models.insert(v.model_id);
    }
    for (const auto& v : misses) {
        const auto& prof =
            join_profile(idx, v.problem_id, v.model_id, v.variant, "miss verdict");
        groups[{v.model_id, bin_of(prof.tool_calls)}].miss.push_back(v);
        models.insert(v.model_id);
    }
    for (const auto& v : prms) {
        const auto& prof =
            join_profile(idx, v.problem_id, v.model_id, v.variant, "PRM verdict");
        groups[{v.model_id, bin_of(prof.tool_calls)}].prm.push_back(v);
        models.insert(v.model_id);
    }

    std::vector<BinRow> rows;
    for (const std::string& model : models) {
        for (const char* bin : kBinLabels) {
            BinRow row;
            row.model_id = model;
            row.bin = bin;
            auto it = groups.find({model, bin});
            if (it != groups.end()) {
                const Acc& acc = it->second;
                row.pair_count = acc.pair_n;
                if (acc.pair_n > 0) {
                    row.win_rate = Rat::of(acc.pair_wins, acc.pair_n);
                }
                row.miss_count = static_cast<std::int64_t>(acc.miss.size());
                if (!acc.miss.empty()) {
                    row.mean_miss_rate = metrics::mean_miss_rate(acc.miss);
                }
                row.prm_count = static_cast<std::int64_t>(acc.prm.size());
                if (!acc.prm.empty()) {
                    row.prm_accuracy = metrics::prm_accuracy(acc.prm);
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---- complexity correlation ------------------------------------------------------

std::vector<CorrelationOutcome> correlate_complexity(
    const std::vector<code_analysis::ComplexityProfile>& profiles,
    const std::vector<MissVerdict>& misses) {
    std::map<std::tuple<std::string, std::string>, const MissVerdict*> miss_idx;
    for (const auto& v : misses) {
        if (v.variant == Variant::TaLM) miss_idx[{v.problem_id, v.model_id}] = &v;
    }

    // per model: (mean_loc, mean_cc, miss_rate) triples for tool-using solutions
    std::map<std::string, std::vector<std::array<double, 3>>> samples;
    for (const auto& p : profiles) {
        if (p.variant != Variant::TaLM || p.tool_calls < 1) continue;
        auto it = miss_idx.find({p.problem_id, p.model_id});
        if (it == miss_idx.end()) continue;
        samples[p.model_id].push_back(
            {p.mean_loc(), p.mean_cc(), metrics::miss_rate(*it->second).value()});
    }

    std::vector<CorrelationOutcome> out;
    for (const auto& [model, triples] : samples) {
        for (int metric = 0; metric < 2; ++metric) {
            CorrelationOutcome oc;
            oc.model_id = model;
            oc.metric = metric == 0 ? "loc" : "cc";
            std::vector<double> xs, ys;
            for (const auto& t : triples) {
                xs.push_back(t[static_cast<std::size_t>(metric)]);
                ys.push_back(t[2]);
                oc.points.emplace_back(t[static_cast<std::size_t>(metric)], t[2]);
            }
            try {
                CorrelationResult res;
                res.x_label = oc.metric == "loc" ? "mean_lines_per_block"
                                                 : "mean_cyclomatic_complexity";
                res.y_label = "miss_rate";
                res.r = pearson(xs, ys);
                res.n = static_cast<int>(xs.size());
                res.p_value = p_value_two_sided(res.r, res.n);
                res.significance = classify_significance(res.p_value);
                oc.result = res;
            } catch (const Error& e) {
                if (e.code() != errc::degenerate_variance &&
                    e.code() != errc::insufficient_data) {
                    throw;
                }
                oc.failure = std::string(errc_name(e.code()));
            }
            out.push_back(std::move(oc));
        }
    }
    return out;
}

// ---- error-taxonomy deltas -------------------------------------------------------

std::vector<ErrorDelta> error_deltas(
    const std::vector<ErrorProfile>& base_profiles,
    const std::vector<ErrorProfile>& talm_profiles,
    const std::map<std::string, std::set<std::string>>& both_correct_ids) {
    auto index = [](const std::vector<ErrorProfile>& ps) {
        std::map<std::pair<std::string, std::string>, const ErrorProfile*> idx;
        for (const auto& p : ps) idx[{p.model_id, p.problem_id}] = &p;
        return idx;
    };
    auto base_idx = index(base_profiles);
    auto talm_idx = index(talm_profiles);

    std::vector<ErrorDelta> out;
    for (const auto& [model, ids] : both_correct_ids) {
        if (ids.empty()) continue;
        std::int64_t counts[2][5] = {};  // [side][category]
        for (const std::string& pid : ids) {
            const ErrorProfile* sides[2];
            auto b = base_idx.find({model, pid});
            auto t = talm_idx.find({model, pid});
            if (b == base_idx.end() || t == talm_idx.end()) {
                raise(errc::missing_profile,
                      "no error profile for " + pid + "/" + model + " on " +
                          (b == base_idx.end() ? "Base" : "TaLM"));
            }
            sides[0] = b->second;
            sides[1] = t->second;
            for (int s = 0; s < 2; ++s) {
                counts[s][0] += sides[s]->logic;
                counts[s][1] += sides[s]->assumption;
                counts[s][2] += sides[s]->creativity;
                counts[s][3] += sides[s]->algebra_arithmetic;
                counts[s][4] += sides[s]->none_of_the_above;
            }
        }
        auto n = static_cast<std::int64_t>(ids.size());
        ErrorDelta d;
        d.model_id = model;
        d.n = n;
        d.logic = Rat::of(counts[1][0] - counts[0][0], n);
        d.assumption = Rat::of(counts[1][1] - counts[0][1], n);
        d.creativity = Rat::of(counts[1][2] - counts[0][2], n);
        d.algebra_arithmetic = Rat::of(counts[1][3] - counts[0][3], n);
        d.none_of_the_above = Rat::of(counts[1][4] - counts[0][4], n);
        out.push_back(std::move(d));
    }
    return out;
}

// ---- aggregate tables ------------------------------------------------------------

MetricsTable aggregate_table(const VerdictStore& store) {
    struct Cells {
        std::int64_t final_total = 0, final_correct = 0;
        std::vector<MissVerdict> miss;
        std::vector<PrmVerdict> prm;
        std::int64_t pair_n = 0, pair_wins = 0;
    };
    std::map<std::pair<std::string, Variant>, Cells> by_row;

    for (const auto& v : store.finals) {
        Cells& c = by_row[{v.model_id, v.variant}];
        ++c.final_total;
        if (v.correct) ++c.final_correct;
    }
    if (by_row.empty()) raise(errc::empty_input, "no final verdicts to tabulate");

    for (const auto& v : store.misses) {
        auto it = by_row.find({v.model_id, v.variant});
        if (it != by_row.end()) it->second.miss.push_back(v);
    }
    for (const auto& v : store.prms) {
        auto it = by_row.find({v.model_id, v.variant});
        if (it != by_row.end()) it->second.prm.push_back(v);
    }
    // a variant's pairs put it against Base; Base itself is scored against TaLM
    for (const auto& v : store.pairs) {
        Variant side = tool_side(v);
        auto credit = [&](Variant row_variant, bool won) {
            auto it = by_row.find({v.model_id, row_variant});
            if (it == by_row.end()) return;
            ++it->second.pair_n;
            if (won) ++it->second.pair_wins;
        };
        credit(side, v.winning_variant() == side);
        if (side == Variant::TaLM) {
            credit(Variant::Base, v.winning_variant() == Variant::Base);
        }
    }

    MetricsTable table;
    for (const auto& [key, c] : by_row) {
        TableRow row;
        row.model_id = key.first;
        row.variant = key.second;
        row.final_acc = pct_tenths(c.final_correct, c.final_total);
        if (!c.miss.empty()) {
            row.miss_rate = pct_tenths(metrics::mean_miss_rate(c.miss));
        } else if (c.final_correct > 0) {
            raise(errc::incomplete_run,
                  "no miss verdicts for " + key.first + "/" +
                      corpus::to_string(key.second));
        }
        if (!c.prm.empty()) {
            row.prm_acc = pct_tenths(metrics::prm_accuracy(c.prm));
        } else if (c.final_correct > 0) {
            raise(errc::incomplete_run,
                  "no PRM verdicts for " + key.first + "/" +
                      corpus::to_string(key.second));
        }
        if (c.pair_n > 0) row.win_rate = pct_tenths(c.pair_wins, c.pair_n);
        table.rows.push_back(std::move(row));
    }

    // unweighted means of the rounded model cells, per variant
    std::map<Variant, std::array<std::pair<std::int64_t, std::int64_t>, 4>> sums;
    for (const auto& row : table.rows) {
        auto& cols = sums[row.variant];
        auto add = [&](int i, const std::optional<std::int64_t>& cell) {
            if (cell) {
                cols[static_cast<std::size_t>(i)].first += *cell;
                cols[static_cast<std::size_t>(i)].second += 1;
            }
        };
        add(0, row.final_acc);
        add(1, row.miss_rate);
        add(2, row.win_rate);
        add(3, row.prm_acc);
    }
    for (const auto& [variant, cols] : sums) {
        TableRow avg;
        avg.model_id = "Average";
        avg.variant = variant;
        auto mean = [&](int i) -> std::optional<std::int64_t> {
            const auto& [sum, count] = cols[static_cast<std::size_t>(i)];
            if (count == 0) return std::nullopt;
            return pct_tenths_of_sum(sum, count);
        };
        avg.final_acc = mean(0);
        avg.miss_rate = mean(1);
        avg.win_rate = mean(2);
        avg.prm_acc = mean(3);
        table.averages.push_back(std::move(avg));
    }
    return table;
}

}  // namespace timaudit::stats
