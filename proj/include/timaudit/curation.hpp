#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "timaudit/corpus.hpp"
#include "timaudit/gateway.hpp"

namespace timaudit::curation {

enum class Recommendation {
    PurePython,
    PythonPlusReasoning,
    PythonForVerification,
    PythonForExploration,
    MinimalPythonRole,
};

std::string to_string(Recommendation r);
// Case-insensitive prefix match against the five canonical option strings.
// Zero or multiple candidates is an UnparsableVerdict.
Recommendation recommendation_from_string(const std::string& s);

struct CurationVerdict {
    std::string problem_id;
    bool python_usefulness = false;
    bool python_sufficiency = false;
    Recommendation recommendation = Recommendation::MinimalPythonRole;
    struct Reasoning {
        std::string mathematical_domain;
        std::string solution_type;
        std::string computational_approach;
        std::string problem_scale;
        std::string verification_needs;
        std::string techniques_required;
    } reasoning;

    json to_json() const;
    static CurationVerdict from_json(const json& j);
};

struct SplitRatios {
    double eval_fraction = 0.595;
    double dev_fraction_of_train = 0.10;
    std::uint64_t seed = 0;
};

// Difficulty gate: problems without a rating pass unchanged, rated problems
// need difficulty >= min_difficulty.
bool filter_difficulty(const corpus::Problem& p, double min_difficulty);

// One judge call against the problem-annotation template; a reply that fails
// to parse is retried once with a repair instruction appended.
CurationVerdict classify_problem(const corpus::Problem& p, gateway::Gateway& judge,
                                 const std::string& judge_model);

// The target condition: code helps but does not finish the job alone.
inline bool admit(const CurationVerdict& v) {
    return v.python_usefulness && !v.python_sufficiency;
}

// Deterministic stratified assignment over (source, difficulty band) strata.
// Within each stratum: round(eval_fraction * n) problems to Eval, then
// round(dev_fraction_of_train * rest) to Dev, remainder to Train.
std::map<std::string, corpus::Split> assign_splits(
    const std::vector<corpus::Problem>& admitted, const SplitRatios& ratios);

struct CurationOutcome {
    std::vector<CurationVerdict> verdicts;  // difficulty-passing problems only
    std::vector<corpus::Problem> admitted;  // with splits assigned
    corpus::CorpusManifest manifest;
};

// Full curation pass: difficulty filter, judge classification, admit rule,
// split assignment, source manifest.
CurationOutcome curate(const std::vector<corpus::Problem>& raw,
                       gateway::Gateway& judge, const std::string& judge_model,
                       double min_difficulty, const SplitRatios& ratios);

std::vector<CurationVerdict> read_curation_verdicts(const fs::path& path);
void write_curation_verdicts(const fs::path& path,
                             const std::vector<CurationVerdict>& v);

}  // namespace timaudit::curation
