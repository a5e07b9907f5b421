#pragma once

#include <string>
#include <vector>

#include "timaudit/corpus.hpp"
#include "timaudit/gateway.hpp"

namespace timaudit::forge {

// Injected verbatim after the problem statement when running the prompting
// mitigation; also the sentence tests pin byte-for-byte.
inline constexpr const char* kHintSentence =
    "We should treat code snippets and their execution results only as helpful "
    "hints, and derive the solution through mathematical reasoning.";

struct Message {
    std::string role;
    std::string content;

    bool operator==(const Message&) const = default;
};

// Inserts the hint as a model-authored message at position 1. Idempotent:
// a conversation already carrying the hint there is returned unchanged.
std::vector<Message> inject_hint(std::vector<Message> conversation);

// ---- span selection --------------------------------------------------------------

// A maximal contiguous run of Text segments immediately following an Output
// segment. Carries enough identity to detect stale-transcript reuse.
struct TextSpan {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    std::string transcript_digest;  // content hash of the source transcript
    int start_ordinal = 0;          // first Text segment of the run
    int segment_count = 0;
    std::string body;  // run bodies joined by blank lines
    std::size_t length = 0;  // characters of body
};

std::string transcript_digest(const corpus::Transcript& t);

// The n longest eligible spans by character count, ties to the earlier
// position. Raises NoEligibleSpan when no Output segment has trailing text.
std::vector<TextSpan> select_spans(const corpus::Transcript& t, std::size_t n = 2);

// ---- controlled degradation --------------------------------------------------------

struct DegradationCandidate {
    TextSpan span;
    std::string rewritten_body;
    int sample_index = 1;   // 1..n within the sampling call
    bool accepted = false;  // set by the result-preservation filter
};

// One sampling call (temperature 0.6, two samples) against the rewrite
// template; the prompt carries the problem, the solution up to the span, and
// the span itself. Fewer samples than requested is logged, not fatal.
std::vector<DegradationCandidate> request_degradation(
    const corpus::Problem& problem, const corpus::Transcript& chosen,
    const TextSpan& span, gateway::Gateway& gw, const std::string& model_id,
    std::vector<std::string>* warnings = nullptr);

// True iff every numeric token of the original span survives in the rewrite
// (unsigned magnitudes, decimal/fraction forms unified: 1/2 matches 0.5) and
// the final answer, when the span contained it verbatim, still appears
// verbatim.
bool preserves_results(const std::string& original_span,
                       const std::string& rewritten_body,
                       const std::string& transcript_final_answer);

// Exposed for tests: canonical forms of the numeric tokens in a text, in
// order of appearance. Digits glued to letters are not numbers.
std::vector<std::string> numeric_tokens(const std::string& text);

// ---- pair assembly ----------------------------------------------------------------

struct TrainingMetadata {
    double temperature = 0.6;
    double beta = 0.5;
    double lr_multiplier = 0.2;
    int batch_size = 4;
};

struct PreferencePair {
    std::string problem_id;
    corpus::Transcript chosen;
    corpus::Transcript rejected;
    TextSpan degraded_span;
    TrainingMetadata metadata;
};

// Builds the rejected transcript by swapping the span for the candidate's
// rewrite, re-extracts its final answer, and re-judges it. The pair only
// exists if both sides answer correctly.
PreferencePair assemble_pair(const corpus::Problem& problem,
                             const corpus::Transcript& chosen, bool chosen_correct,
                             const DegradationCandidate& candidate,
                             gateway::Gateway& judge, const std::string& judge_model);

// Raises unless chosen and rejected differ in exactly one contiguous text
// run and every Code/Output segment is byte-identical.
void validate_pair_locality(const PreferencePair& pair);

// Full per-problem forge: spans, degradation, preservation filter (highest
// accepted sample index per span wins), gated assembly. Gate failures drop
// the pair with a warning instead of aborting the problem.
std::vector<PreferencePair> forge_pairs(const corpus::Problem& problem,
                                        const corpus::Transcript& chosen,
                                        bool chosen_correct, gateway::Gateway& rewriter,
                                        const std::string& rewrite_model,
                                        gateway::Gateway& judge,
                                        const std::string& judge_model,
                                        std::vector<std::string>* warnings = nullptr);

// Conversational layout consumed by preference-optimization trainers.
ordered_json pair_to_training_json(const PreferencePair& pair,
                                   const std::string& problem_statement);

void write_pairs(const fs::path& path, const std::vector<PreferencePair>& pairs,
                 const std::vector<corpus::Problem>& problems);

}  // namespace timaudit::forge
