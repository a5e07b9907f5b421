#include "timaudit/corpus.hpp"

#include <algorithm>

#include "timaudit/errors.hpp"
#include "timaudit/numeric.hpp"

namespace timaudit::corpus {

// ---- enum round-trips --------------------------------------------------------

std::string to_string(Source s) {
    switch (s) {
        case Source::Aime: return "aime";
        case Source::OlympiadBench: return "olympiad_bench";
        case Source::OlympicArena: return "olympic_arena";
        case Source::OmniMath: return "omni_math";
        case Source::Other: return "other";
    }
    return "other";
}

Source source_from_string(const std::string& s) {
    if (s == "aime") return Source::Aime;
    if (s == "olympiad_bench") return Source::OlympiadBench;
    if (s == "olympic_arena") return Source::OlympicArena;
    if (s == "omni_math") return Source::OmniMath;
    if (s == "other") return Source::Other;
    raise(errc::malformed_record, "unknown source: " + s);
}

static std::string source_display(Source s) {
    switch (s) {
        case Source::Aime: return "AIME";
        case Source::OlympiadBench: return "OlympiadBench";
        case Source::OlympicArena: return "OlympicArena";
        case Source::OmniMath: return "Omni-Math";
        case Source::Other: return "Other";
    }
    return "Other";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Unassigned: return "unassigned";
        case Split::Eval: return "eval";
        case Split::Dev: return "dev";
        case Split::Train: return "train";
    }
    return "unassigned";
}

Split split_from_string(const std::string& s) {
    if (s == "unassigned") return Split::Unassigned;
    if (s == "eval") return Split::Eval;
    if (s == "dev") return Split::Dev;
    if (s == "train") return Split::Train;
    raise(errc::malformed_record, "unknown split: " + s);
}

std::string to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::Text: return "text";
        case SegmentKind::Code: return "code";
        case SegmentKind::Output: return "output";
    }
    return "text";
}

SegmentKind segment_kind_from_string(const std::string& s) {
    if (s == "text") return SegmentKind::Text;
    if (s == "code") return SegmentKind::Code;
    if (s == "output") return SegmentKind::Output;
    raise(errc::malformed_record, "unknown segment kind: " + s);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Base: return "base";
        case Variant::TaLM: return "talm";
        case Variant::TaLMPrompted: return "talm_prompted";
        case Variant::TaLMAligned: return "talm_aligned";
    }
    return "base";
}

std::string display_name(Variant v) {
    switch (v) {
        case Variant::Base: return "Base";
        case Variant::TaLM: return "TaLM";
        case Variant::TaLMPrompted: return "TaLM+Prompting";
        case Variant::TaLMAligned: return "TaLM+DPO";
    }
    return "Base";
}

Variant variant_from_string(const std::string& s) {
    if (s == "base") return Variant::Base;
    if (s == "talm") return Variant::TaLM;
    if (s == "talm_prompted") return Variant::TaLMPrompted;
    if (s == "talm_aligned") return Variant::TaLMAligned;
    raise(errc::malformed_record, "unknown variant: " + s);
}

// ---- problems ----------------------------------------------------------------

json Problem::to_json() const {
    json j{{"schema_version", kSchemaVersion},
           {"id", id},
           {"source", corpus::to_string(source)},
           {"statement", statement},
           {"gold_answer", gold_answer},
           {"gold_solution", gold_solution},
           {"split", corpus::to_string(split)}};
    if (difficulty) j["difficulty"] = *difficulty;
    return j;
}

Problem Problem::from_json(const json& j) {
    if (!j.is_object()) raise(errc::malformed_record, "problem record is not an object");
    for (const char* key : {"id", "source", "statement"}) {
        if (!j.contains(key)) {
            raise(errc::malformed_record, std::string("problem record missing ") + key);
        }
    }
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.source = source_from_string(j.at("source").get<std::string>());
    p.statement = j.at("statement").get<std::string>();
    p.gold_answer = j.value("gold_answer", "");
    p.gold_solution = j.value("gold_solution", "");
    if (j.contains("difficulty") && !j.at("difficulty").is_null()) {
        p.difficulty = j.at("difficulty").get<double>();
    }
    p.split = split_from_string(j.value("split", "unassigned"));
    return p;
}

// ---- transcripts ---------------------------------------------------------------

json Transcript::to_json() const {
    json segs = json::array();
    for (const Segment& s : segments) {
        segs.push_back({{"kind", corpus::to_string(s.kind)}, {"body", s.body}});
    }
    return json{{"schema_version", kSchemaVersion},
                {"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"segments", segs},
                {"final_answer", final_answer}};
}

Transcript Transcript::from_json(const json& j) { return parse_transcript(j); }

namespace {

// Splits a text body on fenced code blocks.  A fence opens with ``` plus an
// optional info string alone on a line and closes with ``` alone on a line.
// Info strings naming execution results ("output", "out", "result") yield
// Output segments; anything else is Code.  Marker lines are dropped.
std::vector<Segment> split_fenced(const std::string& body) {
    std::vector<Segment> out;
    std::vector<std::string> lines = split_lines(body);
    std::string current;
    bool in_fence = false;
    SegmentKind fence_kind = SegmentKind::Code;

    auto flush = [&](SegmentKind kind) {
        // Trailing newline from line reassembly is kept; empty chunks are not
        // emitted as segments.
        if (!current.empty() && trim(current).size() > 0) {
            out.push_back(Segment{0, kind, current});
        }
        current.clear();
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        std::string stripped = trim(line);
        bool is_fence = stripped.rfind("```", 0) == 0;
        if (is_fence && !in_fence) {
            flush(SegmentKind::Text);
            in_fence = true;
            std::string info = to_lower(trim(stripped.substr(3)));
            fence_kind = (info == "output" || info == "out" || info == "result")
                             ? SegmentKind::Output
                             : SegmentKind::Code;
            continue;
        }
        if (is_fence && in_fence && stripped == "```") {
            flush(fence_kind);
            in_fence = false;
            continue;
        }
        current += line;
        if (i + 1 < lines.size()) current += '\n';
    }
    if (in_fence) {
        raise(errc::malformed_record, "unterminated code fence in text segment");
    }
    flush(SegmentKind::Text);
    return out;
}

bool body_has_fence(const std::string& body) {
    for (const std::string& line : split_lines(body)) {
        if (trim(line).rfind("```", 0) == 0) return true;
    }
    return false;
}

}  // namespace

Transcript parse_transcript(const json& raw) {
    if (!raw.is_object()) raise(errc::malformed_record, "transcript record is not an object");
    for (const char* key : {"problem_id", "model_id", "variant", "segments"}) {
        if (!raw.contains(key)) {
            raise(errc::malformed_record, std::string("transcript record missing ") + key);
        }
    }
    Transcript t;
    t.problem_id = raw.at("problem_id").get<std::string>();
    t.model_id = raw.at("model_id").get<std::string>();
    t.variant = variant_from_string(raw.at("variant").get<std::string>());

    const json& segs = raw.at("segments");
    if (!segs.is_array() || segs.empty()) {
        raise(errc::malformed_record, "transcript has no segments: " + t.problem_id);
    }
    for (const json& js : segs) {
        if (!js.is_object() || !js.contains("body") ||
            (!js.contains("kind") && !js.contains("role"))) {
            raise(errc::malformed_record,
                  "segment missing kind/role tag in transcript " + t.problem_id);
        }
        std::string tag = js.contains("kind") ? js.at("kind").get<std::string>()
                                              : js.at("role").get<std::string>();
        SegmentKind kind = segment_kind_from_string(tag);
        std::string body = js.at("body").get<std::string>();
        if (kind == SegmentKind::Text && body_has_fence(body)) {
            for (Segment& piece : split_fenced(body)) {
                t.segments.push_back(std::move(piece));
            }
        } else {
            t.segments.push_back(Segment{0, kind, std::move(body)});
        }
    }
    if (t.segments.empty()) {
        raise(errc::malformed_record, "transcript reduces to zero segments: " + t.problem_id);
    }
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
        t.segments[i].ordinal = static_cast<int>(i);
        if (t.segments[i].kind == SegmentKind::Output &&
            (i == 0 || t.segments[i - 1].kind != SegmentKind::Code)) {
            raise(errc::orphan_output,
                  "output segment " + std::to_string(i) + " does not follow code in " +
                      t.problem_id);
        }
    }
    if (t.variant == Variant::Base && count_code_segments(t) != 0) {
        raise(errc::malformed_record,
              "base transcript contains code segments: " + t.problem_id);
    }
    t.final_answer = raw.value("final_answer", "");
    if (t.final_answer.empty()) t.final_answer = extract_final_answer(t);
    return t;
}

std::string extract_final_answer(const Transcript& t) {
    const Segment* last_text = nullptr;
    for (const Segment& s : t.segments) {
        if (s.kind == SegmentKind::Text) last_text = &s;
    }
    if (last_text == nullptr) return "";
    const std::string& body = last_text->body;

    // 1) last \boxed{...} marker, brace-balanced
    std::size_t pos = body.rfind("\\boxed{");
    if (pos != std::string::npos) {
        std::size_t open = pos + 7;
        int depth = 1;
        std::size_t i = open;
        while (i < body.size() && depth > 0) {
            if (body[i] == '{') ++depth;
            if (body[i] == '}') --depth;
            ++i;
        }
        if (depth == 0) return trim(body.substr(open, i - 1 - open));
    }

    // 2) "final answer:" cue (also accepts "answer:"), last occurrence wins
    std::vector<std::string> lines = split_lines(body);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string line = trim(*it);
        // strip markdown emphasis/heading decorations before cue matching
        while (!line.empty() && (line.front() == '#' || line.front() == '*' ||
                                 line.front() == '>' || line.front() == '-')) {
            line.erase(line.begin());
        }
        line = trim(line);
        for (const char* cue : {"final answer", "answer"}) {
            if (starts_with_icase(line, cue)) {
                std::string rest = line.substr(std::string(cue).size());
                // tolerate trailing emphasis between cue and separator
                std::size_t sep = rest.find_first_of(":=");
                if (sep != std::string::npos) {
                    std::string value = trim(rest.substr(sep + 1));
                    while (!value.empty() && value.back() == '*') value.pop_back();
                    if (!value.empty()) return trim(value);
                }
            }
        }
    }

    // 3) last non-empty line
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string line = trim(*it);
        if (!line.empty()) return line;
    }
    return "";
}

int count_code_segments(const Transcript& t) {
    return static_cast<int>(std::count_if(
        t.segments.begin(), t.segments.end(),
        [](const Segment& s) { return s.kind == SegmentKind::Code; }));
}

// ---- persistence ----------------------------------------------------------------

std::vector<Problem> read_problems(const fs::path& path) {
    std::vector<Problem> out;
    for (const json& rec : read_jsonl(path)) {
        out.push_back(Problem::from_json(rec));
    }
    if (out.empty()) raise(errc::empty_corpus, "no problems in " + path.string());
    return out;
}

void write_problems(const fs::path& path, const std::vector<Problem>& problems) {
    std::vector<json> recs;
    recs.reserve(problems.size());
    for (const Problem& p : problems) recs.push_back(p.to_json());
    write_jsonl(path, recs);
}

std::vector<Transcript> read_transcripts(const fs::path& path) {
    std::vector<Transcript> out;
    for (const json& rec : read_jsonl(path)) {
        out.push_back(parse_transcript(rec));
    }
    return out;
}

void write_transcripts(const fs::path& path, const std::vector<Transcript>& transcripts) {
    std::vector<json> recs;
    recs.reserve(transcripts.size());
    for (const Transcript& t : transcripts) recs.push_back(t.to_json());
    write_jsonl(path, recs);
}

// ---- corpus manifest ---------------------------------------------------------------

json CorpusManifest::to_json() const {
    json sources = json::object();
    auto counts_json = [](const SourceCounts& c) {
        return json{{"total", c.total},
                    {"admitted", c.admitted},
                    {"eval", c.eval_count},
                    {"dev", c.dev_count},
                    {"train", c.train_count}};
    };
    for (const auto& [name, counts] : by_source) sources[name] = counts_json(counts);
    return json{{"schema_version", kSchemaVersion},
                {"sources", sources},
                {"totals", counts_json(totals)}};
}

CorpusManifest CorpusManifest::from_json(const json& j) {
    CorpusManifest m;
    auto counts_from = [](const json& c) {
        SourceCounts sc;
        sc.total = c.value("total", 0);
        sc.admitted = c.value("admitted", 0);
        sc.eval_count = c.value("eval", 0);
        sc.dev_count = c.value("dev", 0);
        sc.train_count = c.value("train", 0);
        return sc;
    };
    for (const auto& [name, counts] : j.at("sources").items()) {
        m.by_source[name] = counts_from(counts);
    }
    m.totals = counts_from(j.at("totals"));
    return m;
}

std::string CorpusManifest::to_csv() const {
    std::string out = "source,total,admitted,eval_split_pct\n";
    auto row = [&](const std::string& name, const SourceCounts& c) {
        out += name + "," + std::to_string(c.total) + "," + std::to_string(c.admitted) + ",";
        if (c.admitted > 0) {
            out += format_tenths(pct_tenths(c.eval_count, c.admitted));
        } else {
            out += "-";
        }
        out += '\n';
    };
    for (const auto& [name, counts] : by_source) row(name, counts);
    row("Total", totals);
    return out;
}

CorpusManifest build_manifest(const std::vector<Problem>& all_seen,
                              const std::vector<Problem>& admitted) {
    CorpusManifest m;
    for (const Problem& p : all_seen) {
        ++m.by_source[source_display(p.source)].total;
        ++m.totals.total;
    }
    for (const Problem& p : admitted) {
        SourceCounts& c = m.by_source[source_display(p.source)];
        ++c.admitted;
        ++m.totals.admitted;
        switch (p.split) {
            case Split::Eval:
                ++c.eval_count;
                ++m.totals.eval_count;
                break;
            case Split::Dev:
                ++c.dev_count;
                ++m.totals.dev_count;
                break;
            case Split::Train:
                ++c.train_count;
                ++m.totals.train_count;
                break;
            case Split::Unassigned:
                break;
        }
    }
    return m;
}

}  // namespace timaudit::corpus
