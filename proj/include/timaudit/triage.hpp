#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "timaudit/code_analysis.hpp"
#include "timaudit/metrics.hpp"
#include "timaudit/numeric.hpp"
#include "timaudit/stats.hpp"

namespace timaudit::triage {

// One TaLM solution's audit-relevant facts, all copied verbatim from the
// source verdicts.
struct RiskRecord {
    std::string problem_id;
    std::string model_id;
    bool final_correct = false;
    bool base_won = false;
    bool prm_flagged = false;  // PRM judged the solution incorrect
    Rat miss_rate_value{0, 1};
    std::vector<code_analysis::PrecursorMatch> precursor_matches;

    // the three-condition filter: correct answer, Base preferred, PRM objects
    bool high_risk() const { return final_correct && base_won && prm_flagged; }

    json to_json() const;
    static RiskRecord from_json(const json& j);
};

bool flag_high_risk(const metrics::FinalVerdict& final_talm,
                    const metrics::PairVerdict& pair,
                    const metrics::PrmVerdict& prm_talm);

// One record per final-correct TaLM transcript; raises MissingVerdict when a
// correct transcript lacks its pair, miss, or PRM verdict. Precursor records
// are optional per transcript.
std::vector<RiskRecord> build_risk_records(
    const stats::VerdictStore& store,
    const std::vector<code_analysis::PrecursorRecord>& precursors);

// Highest miss rates first, ties by problem_id ascending; at most k records.
std::vector<RiskRecord> top_k_by_miss_rate(std::vector<RiskRecord> records,
                                           std::size_t k = 10);

// ---- audit bundles --------------------------------------------------------------

enum class TimPresent { Unmarked, Yes, No };

std::string to_string(TimPresent t);
TimPresent tim_present_from_string(const std::string& s);

struct Annotation {
    TimPresent tim_present = TimPresent::Unmarked;
    std::string precursor_phrases;  // free text filled by the auditor
};

struct BundleRecord {
    RiskRecord risk;
    corpus::Transcript transcript;
    Annotation annotation;
};

struct TriageBundle {
    std::string model_id;
    std::vector<BundleRecord> records;
};

// Self-contained audit document, fixed field order, annotation slots blank
// until a human fills them.
void write_bundle(const fs::path& path, const TriageBundle& bundle);
TriageBundle read_bundle(const fs::path& path);

struct TriageSummary {
    std::int64_t yes = 0;
    std::int64_t no = 0;
    std::int64_t unmarked = 0;
    // yes / (yes + no); absent when nothing is marked
    std::optional<Rat> prevalence;
};

TriageSummary summarize(const std::vector<TriageBundle>& bundles);

}  // namespace timaudit::triage
