#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "timaudit/corpus.hpp"
#include "timaudit/gateway.hpp"
#include "timaudit/numeric.hpp"

namespace timaudit::metrics {

// ---- verdict records ----------------------------------------------------------

struct FinalVerdict {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    bool correct = false;

    json to_json() const;
    static FinalVerdict from_json(const json& j);
};

struct CategoryGrade {
    int score = 0;  // 0..5, higher = worse
    std::string explanation;
};

struct SideGrades {
    CategoryGrade logic;
    CategoryGrade assumption;
    CategoryGrade creativity;
    CategoryGrade algebra_arithmetic;
    double final_score = 0.0;  // mean of the four, always a multiple of 0.25

    int score_sum() const {
        return logic.score + assumption.score + creativity.score +
               algebra_arithmetic.score;
    }
};

enum class Side { A, B };

std::string to_string(Side s);

struct PairVerdict {
    std::string problem_id;
    std::string model_id;
    corpus::Variant side_a = corpus::Variant::Base;  // variant shown as "A"
    corpus::Variant side_b = corpus::Variant::TaLM;  // variant shown as "B"
    SideGrades a;
    SideGrades b;
    Side winner = Side::A;

    corpus::Variant winning_variant() const {
        return winner == Side::A ? side_a : side_b;
    }

    json to_json() const;
    static PairVerdict from_json(const json& j);
};

struct GoldStep {
    int step = 0;  // 1-based index into the gold solution
    std::string summary;
};

struct MissVerdict {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    std::vector<GoldStep> gold_steps;     // indices 1..n contiguous
    std::vector<GoldStep> missing_steps;  // subset of gold_steps by index

    json to_json() const;
    static MissVerdict from_json(const json& j);
};

struct PrmVerdict {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    std::vector<double> step_scores;  // each in [0,1]
    double threshold = 0.5;
    bool solution_correct = false;  // min(step_scores) >= threshold

    json to_json() const;
    static PrmVerdict from_json(const json& j);
};

struct ErrorProfile {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    bool logic = false;
    bool assumption = false;
    bool creativity = false;
    bool algebra_arithmetic = false;
    bool none_of_the_above = true;  // always == !(any category)
    std::map<std::string, int> severity;  // optional per-category extension

    bool any_error() const {
        return logic || assumption || creativity || algebra_arithmetic;
    }

    json to_json() const;
    static ErrorProfile from_json(const json& j);
};

// ---- judge plumbing -----------------------------------------------------------

// Flattens a transcript for inclusion in a judge prompt: text verbatim, code
// and output segments as fenced blocks.
std::string transcript_to_text(const corpus::Transcript& t);

// Finds the first balanced {...} region of `text` that parses as JSON.
// Judges habitually wrap their answer in prose or markdown fences.
std::optional<json> extract_json_object(const std::string& text);

// ---- judging operations ---------------------------------------------------------

FinalVerdict judge_final_answer(const corpus::Problem& problem,
                                const corpus::Transcript& transcript,
                                gateway::Gateway& judge,
                                const std::string& judge_model);

// Side order is a seeded coin per problem so neither variant systematically
// occupies position A. Caller must have applied the final-answer gate to both.
PairVerdict judge_pairwise(const corpus::Problem& problem,
                           const corpus::Transcript& first,
                           const corpus::Transcript& second,
                           gateway::Gateway& judge, const std::string& judge_model,
                           std::uint64_t seed);

MissVerdict judge_missing_steps(const corpus::Problem& problem,
                                const corpus::Transcript& transcript,
                                gateway::Gateway& judge,
                                const std::string& judge_model);

ErrorProfile judge_error_profile(const corpus::Problem& problem,
                                 const corpus::Transcript& transcript,
                                 gateway::Gateway& judge,
                                 const std::string& judge_model,
                                 std::vector<std::string>* warnings = nullptr);

// ---- PRM scoring ----------------------------------------------------------------

struct SolutionStep {
    std::string text;
    bool tool = false;  // code or execution output
};

// Text segments split on blank lines and enumerated-item starts; code and
// output segments are one step each. Conserves every non-whitespace character.
std::vector<SolutionStep> split_into_steps(const corpus::Transcript& t);

PrmVerdict score_with_prm(const corpus::Problem& problem,
                          const corpus::Transcript& transcript,
                          gateway::Gateway& prm, const std::string& prm_model,
                          double threshold);

// ---- aggregation ---------------------------------------------------------------

Rat final_accuracy(const std::vector<FinalVerdict>& verdicts);
Rat win_rate(const std::vector<PairVerdict>& verdicts, corpus::Variant for_variant);
Rat miss_rate(const MissVerdict& verdict);
Rat mean_miss_rate(const std::vector<MissVerdict>& verdicts);
Rat prm_accuracy(const std::vector<PrmVerdict>& verdicts);

// Confirms every downstream verdict references final-correct transcripts:
// pair verdicts need both sides correct, error profiles need both Base and
// TaLM correct, miss and PRM verdicts need their own transcript correct.
void validate_gate_discipline(const std::vector<FinalVerdict>& finals,
                              const std::vector<PairVerdict>& pairs,
                              const std::vector<MissVerdict>& misses,
                              const std::vector<PrmVerdict>& prms,
                              const std::vector<ErrorProfile>& profiles);

// ---- persistence ---------------------------------------------------------------

std::vector<FinalVerdict> read_final_verdicts(const fs::path& path);
void write_final_verdicts(const fs::path& path, const std::vector<FinalVerdict>& v);
std::vector<PairVerdict> read_pair_verdicts(const fs::path& path);
void write_pair_verdicts(const fs::path& path, const std::vector<PairVerdict>& v);
std::vector<MissVerdict> read_miss_verdicts(const fs::path& path);
void write_miss_verdicts(const fs::path& path, const std::vector<MissVerdict>& v);
std::vector<PrmVerdict> read_prm_verdicts(const fs::path& path);
void write_prm_verdicts(const fs::path& path, const std::vector<PrmVerdict>& v);
std::vector<ErrorProfile> read_error_profiles(const fs::path& path);
void write_error_profiles(const fs::path& path, const std::vector<ErrorProfile>& v);

}  // namespace timaudit::metrics
