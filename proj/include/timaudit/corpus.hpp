#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "timaudit/util.hpp"

namespace timaudit::corpus {

inline constexpr int kSchemaVersion = 1;

// ---- problems ---------------------------------------------------------------

enum class Source { Aime, OlympiadBench, OlympicArena, OmniMath, Other };

enum class Split { Unassigned, Eval, Dev, Train };

std::string to_string(Source s);
Source source_from_string(const std::string& s);
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Problem {
    std::string id;
    Source source = Source::Other;
    std::string statement;
    std::string gold_answer;
    std::string gold_solution;
    std::optional<double> difficulty;  // only rated sources carry one
    Split split = Split::Unassigned;

    json to_json() const;
    static Problem from_json(const json& j);
};

// ---- transcripts ------------------------------------------------------------

enum class SegmentKind { Text, Code, Output };

std::string to_string(SegmentKind k);
SegmentKind segment_kind_from_string(const std::string& s);

struct Segment {
    int ordinal = 0;  // contiguous from zero within a transcript
    SegmentKind kind = SegmentKind::Text;
    std::string body;

    bool operator==(const Segment&) const = default;
};

enum class Variant { Base, TaLM, TaLMPrompted, TaLMAligned };

std::string to_string(Variant v);
std::string display_name(Variant v);  // table labels: Base, TaLM, TaLM+Prompting, TaLM+DPO
Variant variant_from_string(const std::string& s);

struct Transcript {
    std::string problem_id;
    std::string model_id;
    Variant variant = Variant::Base;
    std::vector<Segment> segments;
    std::string final_answer;

    json to_json() const;
    static Transcript from_json(const json& j);
};

// Validates a raw transcript record and produces the canonical form:
//  - segments gain contiguous ordinals;
//  - a text segment containing fenced code blocks is split into surrounding
//    text plus Code segments (fence info string "output"/"out"/"result"
//    yields an Output segment); fence marker lines are structural and are
//    not part of any body;
//  - every Output segment must immediately follow a Code segment
//    (OrphanOutput otherwise);
//  - Base transcripts must contain no Code segments;
//  - final_answer, when absent from the record, is extracted from the last
//    Text segment: last \boxed{...} marker, else a "final answer:" cue
//    line, else the last non-empty line.
Transcript parse_transcript(const json& raw);

// The extraction cascade by itself (exposed for reuse after span edits).
std::string extract_final_answer(const Transcript& t);

int count_code_segments(const Transcript& t);

// ---- persistence ------------------------------------------------------------

std::vector<Problem> read_problems(const fs::path& path);
void write_problems(const fs::path& path, const std::vector<Problem>& problems);

std::vector<Transcript> read_transcripts(const fs::path& path);
void write_transcripts(const fs::path& path, const std::vector<Transcript>& transcripts);

// ---- corpus manifest ---------------------------------------------------------

struct SourceCounts {
    std::int64_t total = 0;
    std::int64_t admitted = 0;
    std::int64_t eval_count = 0;
    std::int64_t dev_count = 0;
    std::int64_t train_count = 0;
};

struct CorpusManifest {
    std::map<std::string, SourceCounts> by_source;  // keyed by display name
    SourceCounts totals;

    json to_json() const;
    static CorpusManifest from_json(const json& j);
    // source, total, admitted, eval split % (one decimal)
    std::string to_csv() const;
};

CorpusManifest build_manifest(const std::vector<Problem>& all_seen,
                              const std::vector<Problem>& admitted);

}  // namespace timaudit::corpus
