#pragma once

#include <optional>
#include <string>
#include <vector>

#include "timaudit/corpus.hpp"

namespace timaudit::code_analysis {

// ---- per-transcript complexity ------------------------------------------------

struct ComplexityProfile {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    int tool_calls = 0;
    std::vector<int> loc_per_block;
    std::vector<int> cc_per_block;

    double mean_loc() const;
    double mean_cc() const;

    json to_json() const;
    static ComplexityProfile from_json(const json& j);
};

// Number of Code segments in the transcript.
int count_tool_calls(const corpus::Transcript& t);

// Tool-call count plus per-block line and complexity measurements for one
// transcript.
ComplexityProfile profile_transcript(const corpus::Transcript& t);

// Non-blank lines (comments included; a line of only whitespace is blank).
int lines_of_code(const std::string& code);

// McCabe cyclomatic complexity of an interpreter snippet: 1 + decision
// tokens.  Decision tokens, counted on the lexed token stream with string
// and comment content stripped: if, elif, for, while, except, and, or,
// assert (ternary and comprehension-filter `if` are `if` tokens; a `case`
// arm at the start of a line counts one).  `else` never counts.  Raises
// LexFailure on an unterminated string literal.
int cyclomatic_complexity(const std::string& code);

ComplexityProfile profile_transcript(const corpus::Transcript& t);

// ---- similarity and clustering --------------------------------------------------

// Ratcliff/Obershelp ratio, byte-level, matching difflib.SequenceMatcher
// with autojunk disabled: 2*M / (len(a)+len(b)); two empty strings -> 1.0.
double similarity(std::string_view a, std::string_view b);

struct PhraseCluster {
    std::string representative;           // normalized form of the first member
    std::vector<std::string> members;     // original phrasings, input order
};

// Greedy first-fit clustering: each phrase (normalized: lowercased, terminal
// punctuation stripped) joins the first existing cluster whose representative
// is within `threshold`, else founds a new cluster.  Deterministic in input
// order.
std::vector<PhraseCluster> cluster_phrases(const std::vector<std::string>& phrases,
                                           double threshold);

// ---- precursor-phrase detection ---------------------------------------------------

struct LexiconEntry {
    std::string category;
    std::string phrase;
};

struct PrecursorLexicon {
    std::vector<LexiconEntry> entries;

    // Tab-separated "category<TAB>phrase" lines; '#' comments and blank
    // lines ignored.
    static PrecursorLexicon load(const fs::path& path);
    static PrecursorLexicon parse(const std::string& text);
    void save(const fs::path& path) const;
};

// Phrases seeded from the audit's standing categories (numerical checking,
// code verification, approximation/convergence, systematic search).
PrecursorLexicon default_lexicon();

struct PrecursorMatch {
    int segment_ordinal = 0;
    std::string window;     // transcript words that matched
    std::string phrase;     // lexicon phrase it matched
    std::string category;
    double score = 0.0;

    json to_json() const;
    static PrecursorMatch from_json(const json& j);
};

// Slides word n-grams (phrase word count +/- 1) over sentences of each Text
// segment and reports windows whose similarity to a lexicon phrase reaches
// `threshold`.  One match per (segment, phrase): the best-scoring window.
std::vector<PrecursorMatch> detect_precursors(const corpus::Transcript& t,
                                              const PrecursorLexicon& lexicon,
                                              double threshold);

struct PrecursorRecord {
    std::string problem_id;
    std::string model_id;
    corpus::Variant variant = corpus::Variant::Base;
    std::vector<PrecursorMatch> matches;

    json to_json() const;
    static PrecursorRecord from_json(const json& j);
};

}  // namespace timaudit::code_analysis
