#include "timaudit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "timaudit/errors.hpp"
#include "timaudit/prompts.hpp"

namespace timaudit::metrics {

using corpus::SegmentKind;
using corpus::Variant;
using gateway::TemplateId;

// ---- serialization ------------------------------------------------------------

json FinalVerdict::to_json() const {
    return json{{"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"correct", correct}};
}

FinalVerdict FinalVerdict::from_json(const json& j) {
    FinalVerdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.model_id = j.at("model_id").get<std::string>();
    v.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    v.correct = j.at("correct").get<bool>();
    return v;
}

std::string to_string(Side s) { return s == Side::A ? "A" : "B"; }

namespace {

json grades_to_json(const SideGrades& g) {
    auto cat = [](const CategoryGrade& c) {
        return json{{"score", c.score}, {"explanation", c.explanation}};
    };
    return json{{"logic", cat(g.logic)},
                {"assumption", cat(g.assumption)},
                {"creativity", cat(g.creativity)},
                {"algebra_arithmetic", cat(g.algebra_arithmetic)},
                {"final_score", g.final_score}};
}

SideGrades grades_from_json(const json& j) {
    auto cat = [&](const char* name) {
        CategoryGrade c;
        c.score = j.at(name).at("score").get<int>();
        c.explanation = j.at(name).value("explanation", "");
        return c;
    };
    SideGrades g;
    g.logic = cat("logic");
    g.assumption = cat("assumption");
    g.creativity = cat("creativity");
    g.algebra_arithmetic = cat("algebra_arithmetic");
    g.final_score = j.at("final_score").get<double>();
    return g;
}

}  // namespace

json PairVerdict::to_json() const {
    return json{{"problem_id", problem_id},
                {"model_id", model_id},
                {"side_a", corpus::to_string(side_a)},
                {"side_b", corpus::to_string(side_b)},
                {"a", grades_to_json(a)},
                {"b", grades_to_json(b)},
                {"winner", to_string(winner)}};
}

PairVerdict PairVerdict::from_json(const json& j) {
    PairVerdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.model_id = j.at("model_id").get<std::string>();
    v.side_a = corpus::variant_from_string(j.at("side_a").get<std::string>());
    v.side_b = corpus::variant_from_string(j.at("side_b").get<std::string>());
    v.a = grades_from_json(j.at("a"));
    v.b = grades_from_json(j.at("b"));
    std::string w = j.at("winner").get<std::string>();
    if (w != "A" && w != "B") raise(errc::malformed_record, "winner must be A or B");
    v.winner = w == "A" ? Side::A : Side::B;
    return v;
}

namespace {

json steps_to_json(const std::vector<GoldStep>& steps) {
    json arr = json::array();
    for (const auto& s : steps) {
        arr.push_back(json{{"step", s.step}, {"summary", s.summary}});
    }
    return arr;
}

std::vector<GoldStep> steps_from_json(const json& arr) {
    std::vector<GoldStep> out;
    for (const json& j : arr) {
        out.push_back(GoldStep{j.at("step").get<int>(), j.value("summary", "")});
    }
    return out;
}

}  // namespace

json MissVerdict::to_json() const {
    return json{{"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"gold_steps", steps_to_json(gold_steps)},
                {"missing_steps", steps_to_json(missing_steps)}};
}

MissVerdict MissVerdict::from_json(const json& j) {
    MissVerdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.model_id = j.at("model_id").get<std::string>();
    v.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    v.gold_steps = steps_from_json(j.at("gold_steps"));
    v.missing_steps = steps_from_json(j.at("missing_steps"));
    return v;
}

json PrmVerdict::to_json() const {
    return json{{"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"step_scores", step_scores},
                {"threshold", threshold},
                {"solution_correct", solution_correct}};
}

PrmVerdict PrmVerdict::from_json(const json& j) {
    PrmVerdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.model_id = j.at("model_id").get<std::string>();
    v.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    v.step_scores = j.at("step_scores").get<std::vector<double>>();
    v.threshold = j.at("threshold").get<double>();
    v.solution_correct = j.at("solution_correct").get<bool>();
    return v;
}

json ErrorProfile::to_json() const {
    json j{{"problem_id", problem_id},
           {"model_id", model_id},
           {"variant", corpus::to_string(variant)},
           {"logic", logic},
           {"assumption", assumption},
           {"creativity", creativity},
           {"algebra_arithmetic", algebra_arithmetic},
           {"none_of_the_above", none_of_the_above}};
    if (!severity.empty()) j["severity"] = severity;
    return j;
}

ErrorProfile ErrorProfile::from_json(const json& j) {
    ErrorProfile p;
    p.problem_id = j.at("problem_id").get<std::string>();
    p.model_id = j.at("model_id").get<std::string>();
    p.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    p.logic = j.at("logic").get<bool>();
    p.assumption = j.at("assumption").get<bool>();
    p.creativity = j.at("creativity").get<bool>();
    p.algebra_arithmetic = j.at("algebra_arithmetic").get<bool>();
    p.none_of_the_above = j.at("none_of_the_above").get<bool>();
    if (j.contains("severity")) {
        p.severity = j.at("severity").get<std::map<std::string, int>>();
    }
    if (p.none_of_the_above == p.any_error()) {
        raise(errc::schema_violation,
              "error profile for " + p.problem_id +
                  ": none_of_the_above contradicts category flags");
    }
    return p;
}

// ---- judge plumbing -----------------------------------------------------------

std::string transcript_to_text(const corpus::Transcript& t) {
    std::string out;
    for (const auto& seg : t.segments) {
        if (!out.empty()) out += "\n\n";
        switch (seg.kind) {
            case SegmentKind::Text: out += seg.body; break;
            case SegmentKind::Code:
                out += "```python\n" + seg.body + "\n```";
                break;
            case SegmentKind::Output:
                out += "```output\n" + seg.body + "\n```";
                break;
        }
    }
    return out;
}

std::optional<json> extract_json_object(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (c == '\\') {
                    ++i;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    json parsed = json::parse(text.substr(start, i - start + 1),
                                              nullptr, false);
                    if (!parsed.is_discarded()) return parsed;
                    break;  // balanced but unparsable: try the next '{'
                }
            }
        }
    }
    return std::nullopt;
}

namespace {

std::string submit_single(gateway::Gateway& judge, const gateway::JudgeRequest& req) {
    gateway::JudgeResponse resp = judge.submit(req);
    if (resp.raw_text.empty()) {
        raise(errc::unparsable_verdict, "judge returned no samples");
    }
    return resp.raw_text.front();
}

json require_object(const std::string& raw, const std::string& what) {
    auto obj = extract_json_object(raw);
    if (!obj) raise(errc::unparsable_verdict, "no JSON object in " + what + " reply");
    return *obj;
}

}  // namespace

// ---- judging operations ---------------------------------------------------------

FinalVerdict judge_final_answer(const corpus::Problem& problem,
                                const corpus::Transcript& transcript,
                                gateway::Gateway& judge,
                                const std::string& judge_model) {
    auto req = prompts::make_request(TemplateId::FinalAnswer,
                                     {{"problem", problem.statement},
                                      {"answer", transcript.final_answer},
                                      {"gold_answer", problem.gold_answer}},
                                     judge_model);
    json obj = require_object(submit_single(judge, req), "final-answer");
    if (!obj.contains("equivalent") || !obj["equivalent"].is_boolean()) {
        raise(errc::unparsable_verdict, "final-answer reply lacks boolean \"equivalent\"");
    }
    FinalVerdict v;
    v.problem_id = problem.id;
    v.model_id = transcript.model_id;
    v.variant = transcript.variant;
    v.correct = obj["equivalent"].get<bool>();
    return v;
}

namespace {

SideGrades parse_side_grades(const json& j, const std::string& label) {
    auto cat = [&](const char* name) {
        if (!j.contains(name) || !j[name].is_object() || !j[name].contains("score")) {
            raise(errc::unparsable_verdict,
                  "grades for " + label + " missing category " + name);
        }
        const json& c = j[name];
        if (!c["score"].is_number_integer()) {
            raise(errc::unparsable_verdict,
                  label + "." + name + " score is not an integer");
        }
        int score = c["score"].get<int>();
        if (score < 0 || score > 5) {
            raise(errc::unparsable_verdict,
                  label + "." + name + " score " + std::to_string(score) +
                      " outside 0..5");
        }
        CategoryGrade g;
        g.score = score;
        g.explanation = c.value("explanation", "");
        return g;
    };
    SideGrades g;
    g.logic = cat("logic");
    g.assumption = cat("assumption");
    g.creativity = cat("creativity");
    g.algebra_arithmetic = cat("algebra_arithmetic");
    if (!j.contains("final_score") || !j["final_score"].contains("score") ||
        !j["final_score"]["score"].is_number()) {
        raise(errc::unparsable_verdict, "grades for " + label + " missing final_score");
    }
    g.final_score = j["final_score"]["score"].get<double>();
    // sums of four 0..5 integers divided by 4 are exact in binary, so the
    // judge's reported mean must match bit-for-bit
    double expected = g.score_sum() / 4.0;
    if (g.final_score != expected) {
        raise(errc::inconsistent_winner,
              "declared final_score for " + label + " is " +
                  std::to_string(g.final_score) + " but categories average " +
                  std::to_string(expected));
    }
    return g;
}

}  // namespace

PairVerdict judge_pairwise(const corpus::Problem& problem,
                           const corpus::Transcript& first,
                           const corpus::Transcript& second,
                           gateway::Gateway& judge, const std::string& judge_model,
                           std::uint64_t seed) {
    if (first.model_id != second.model_id) {
        raise(errc::precondition, "pairwise comparison across models: " +
                                      first.model_id + " vs " + second.model_id);
    }
    DetRng rng(seed ^ fnv1a64(problem.id));
    const corpus::Transcript& a = rng.coin() ? first : second;
    const corpus::Transcript& b = (&a == &first) ? second : first;

    auto req = prompts::make_request(TemplateId::WinRate,
                                     {{"problem", problem.statement},
                                      {"solution_a", transcript_to_text(a)},
                                      {"solution_b", transcript_to_text(b)}},
                                     judge_model);
    json obj = require_object(submit_single(judge, req), "pairwise");
    if (!obj.contains("A_grades") || !obj.contains("B_grades") ||
        !obj.contains("best_solution")) {
        raise(errc::unparsable_verdict, "pairwise reply missing grade sections");
    }

    PairVerdict v;
    v.problem_id = problem.id;
    v.model_id = first.model_id;
    v.side_a = a.variant;
    v.side_b = b.variant;
    v.a = parse_side_grades(obj["A_grades"], "A");
    v.b = parse_side_grades(obj["B_grades"], "B");

    std::string best = trim(obj["best_solution"].get<std::string>());
    if (best != "A" && best != "B") {
        raise(errc::unparsable_verdict, "best_solution must be A or B, got: " + best);
    }
    v.winner = best == "A" ? Side::A : Side::B;

    double win_score = v.winner == Side::A ? v.a.final_score : v.b.final_score;
    double lose_score = v.winner == Side::A ? v.b.final_score : v.a.final_score;
    if (win_score > lose_score) {
        raise(errc::inconsistent_winner,
              "judge declared " + to_string(v.winner) + " the winner with final score " +
                  std::to_string(win_score) + " against " + std::to_string(lose_score));
    }
    return v;
}

MissVerdict judge_missing_steps(const corpus::Problem& problem,
                                const corpus::Transcript& transcript,
                                gateway::Gateway& judge,
                                const std::string& judge_model) {
    if (problem.gold_solution.empty()) {
        raise(errc::empty_gold, "problem " + problem.id + " has no gold solution");
    }
    auto req = prompts::make_request(TemplateId::MissRate,
                                     {{"problem", problem.statement},
                                      {"solution", transcript_to_text(transcript)},
                                      {"gold_solution", problem.gold_solution}},
                                     judge_model);
    json obj = require_object(submit_single(judge, req), "missing-steps");
    if (!obj.contains("gold_steps") || !obj["gold_steps"].is_array() ||
        !obj.contains("missing_steps") || !obj["missing_steps"].is_array()) {
        raise(errc::unparsable_verdict, "missing-steps reply lacks step arrays");
    }

    MissVerdict v;
    v.problem_id = problem.id;
    v.model_id = transcript.model_id;
    v.variant = transcript.variant;
    v.gold_steps = steps_from_json(obj["gold_steps"]);
    v.missing_steps = steps_from_json(obj["missing_steps"]);

    for (std::size_t i = 0; i < v.gold_steps.size(); ++i) {
        if (v.gold_steps[i].step != static_cast<int>(i) + 1) {
            raise(errc::unparsable_verdict,
                  "gold step indices must run 1..n, found " +
                      std::to_string(v.gold_steps[i].step) + " at position " +
                      std::to_string(i + 1));
        }
    }
    std::set<int> seen;
    for (const auto& m : v.missing_steps) {
        if (m.step < 1 || m.step > static_cast<int>(v.gold_steps.size())) {
            raise(errc::index_out_of_range,
                  "missing step " + std::to_string(m.step) + " not in gold list of " +
                      std::to_string(v.gold_steps.size()));
        }
        if (!seen.insert(m.step).second) {
            raise(errc::unparsable_verdict,
                  "missing step " + std::to_string(m.step) + " listed twice");
        }
    }
    return v;
}

ErrorProfile judge_error_profile(const corpus::Problem& problem,
                                 const corpus::Transcript& transcript,
                                 gateway::Gateway& judge,
                                 const std::string& judge_model,
                                 std::vector<std::string>* warnings) {
    auto req = prompts::make_request(TemplateId::ErrorProfile,
                                     {{"problem", problem.statement},
                                      {"solution", transcript_to_text(transcript)}},
                                     judge_model);
    json obj = require_object(submit_single(judge, req), "error-profile");

    auto flag = [&](const char* name) {
        if (!obj.contains(name) || !obj[name].is_object() ||
            !obj[name].contains("exists")) {
            raise(errc::unparsable_verdict,
                  std::string("error-profile reply missing category ") + name);
        }
        std::string e = to_lower(trim(obj[name]["exists"].get<std::string>()));
        if (e != "yes" && e != "no") {
            raise(errc::unparsable_verdict,
                  std::string(name) + ".exists must be yes or no, got: " + e);
        }
        return e == "yes";
    };

    ErrorProfile p;
    p.problem_id = problem.id;
    p.model_id = transcript.model_id;
    p.variant = transcript.variant;
    p.logic = flag("logic");
    p.assumption = flag("assumption");
    p.creativity = flag("creativity");
    p.algebra_arithmetic = flag("algebra_arithmetic");
    bool declared_none = flag("none_of_the_above");

    for (const char* name :
         {"logic", "assumption", "creativity", "algebra_arithmetic"}) {
        if (obj[name].contains("severity") && obj[name]["severity"].is_number_integer()) {
            p.severity[name] = obj[name]["severity"].get<int>();
        }
    }

    p.none_of_the_above = !p.any_error();
    if (declared_none != p.none_of_the_above && warnings) {
        warnings->push_back("error profile for " + p.problem_id + "/" + p.model_id +
                            ": none_of_the_above repaired to " +
                            (p.none_of_the_above ? "yes" : "no") +
                            " from category flags");
    }
    return p;
}

// ---- PRM scoring ----------------------------------------------------------------

namespace {

bool enumerated_item_start(const std::string& line) {
    std::size_t i = line.find_first_not_of(" \t");
    if (i == std::string::npos || !std::isdigit(static_cast<unsigned char>(line[i]))) {
        return false;
    }
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    return i + 1 < line.size() && (line[i] == '.' || line[i] == ')') &&
           (line[i + 1] == ' ' || line[i + 1] == '\t');
}

void split_text_block(const std::string& body, std::vector<SolutionStep>& out) {
    std::string current;
    auto flush = [&] {
        if (current.find_first_not_of(" \t\n\r") != std::string::npos) {
            out.push_back(SolutionStep{current, false});
        }
        current.clear();
    };
    for (const std::string& line : split_lines(body)) {
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (blank) {
            flush();
            continue;
        }
        if (enumerated_item_start(line) && !current.empty()) flush();
        if (!current.empty()) current += "\n";
        current += line;
    }
    flush();
}

}  // namespace

std::vector<SolutionStep> split_into_steps(const corpus::Transcript& t) {
    if (t.segments.empty()) {
        raise(errc::precondition, "cannot split an empty transcript");
    }
    std::vector<SolutionStep> steps;
    for (const auto& seg : t.segments) {
        if (seg.kind == SegmentKind::Text) {
            split_text_block(seg.body, steps);
        } else {
            steps.push_back(SolutionStep{seg.body, true});
        }
    }
    return steps;
}

PrmVerdict score_with_prm(const corpus::Problem& problem,
                          const corpus::Transcript& transcript,
                          gateway::Gateway& prm, const std::string& prm_model,
                          double threshold) {
    std::vector<SolutionStep> steps = split_into_steps(transcript);
    gateway::PrmRequest req;
    req.model_id = prm_model;
    req.problem = problem.statement;
    for (const auto& s : steps) req.steps.push_back(s.text);

    PrmVerdict v;
    v.problem_id = problem.id;
    v.model_id = transcript.model_id;
    v.variant = transcript.variant;
    v.step_scores = prm.score_steps(req);
    v.threshold = threshold;
    double min_score = *std::min_element(v.step_scores.begin(), v.step_scores.end());
    v.solution_correct = min_score >= threshold;
    return v;
}

// ---- aggregation ---------------------------------------------------------------

Rat final_accuracy(const std::vector<FinalVerdict>& verdicts) {
    if (verdicts.empty()) raise(errc::empty_input, "no final verdicts");
    std::int64_t correct = 0;
    for (const auto& v : verdicts) correct += v.correct ? 1 : 0;
    return Rat::of(correct, static_cast<std::int64_t>(verdicts.size()));
}

Rat win_rate(const std::vector<PairVerdict>& verdicts, Variant for_variant) {
    if (verdicts.empty()) raise(errc::empty_input, "no pair verdicts");
    std::int64_t wins = 0;
    for (const auto& v : verdicts) wins += v.winning_variant() == for_variant ? 1 : 0;
    return Rat::of(wins, static_cast<std::int64_t>(verdicts.size()));
}

Rat miss_rate(const MissVerdict& verdict) {
    if (verdict.gold_steps.empty()) {
        raise(errc::empty_gold, "miss rate undefined without gold steps");
    }
    return Rat::of(static_cast<std::int64_t>(verdict.missing_steps.size()),
                   static_cast<std::int64_t>(verdict.gold_steps.size()));
}

Rat mean_miss_rate(const std::vector<MissVerdict>& verdicts) {
    if (verdicts.empty()) raise(errc::empty_input, "no miss verdicts");
    Rat sum{0, 1};
    for (const auto& v : verdicts) sum = sum + miss_rate(v);
    return sum / static_cast<std::int64_t>(verdicts.size());
}

Rat prm_accuracy(const std::vector<PrmVerdict>& verdicts) {
    if (verdicts.empty()) raise(errc::empty_input, "no PRM verdicts");
    double threshold = verdicts.front().threshold;
    std::int64_t correct = 0;
    for (const auto& v : verdicts) {
        if (v.threshold != threshold) {
            raise(errc::mixed_threshold,
                  "PRM verdicts mix thresholds " + std::to_string(threshold) +
                      " and " + std::to_string(v.threshold));
        }
        correct += v.solution_correct ? 1 : 0;
    }
    return Rat::of(correct, static_cast<std::int64_t>(verdicts.size()));
}

void validate_gate_discipline(const std::vector<FinalVerdict>& finals,
                              const std::vector<PairVerdict>& pairs,
                              const std::vector<MissVerdict>& misses,
                              const std::vector<PrmVerdict>& prms,
                              const std::vector<ErrorProfile>& profiles) {
    std::map<std::tuple<std::string, std::string, Variant>, bool> correct;
    for (const auto& v : finals) {
        correct[{v.problem_id, v.model_id, v.variant}] = v.correct;
    }
    auto require_correct = [&](const std::string& pid, const std::string& mid,
                               Variant var, const char* kind) {
        auto it = correct.find({pid, mid, var});
        if (it == correct.end()) {
            raise(errc::missing_verdict,
                  std::string(kind) + " for " + pid + "/" + mid + "/" +
                      corpus::to_string(var) + " has no final verdict");
        }
        if (!it->second) {
            raise(errc::precondition,
                  std::string(kind) + " for " + pid + "/" + mid + "/" +
                      corpus::to_string(var) + " references an incorrect solution");
        }
    };
    for (const auto& v : pairs) {
        require_correct(v.problem_id, v.model_id, v.side_a, "pair verdict");
        require_correct(v.problem_id, v.model_id, v.side_b, "pair verdict");
    }
    for (const auto& v : misses) {
        require_correct(v.problem_id, v.model_id, v.variant, "miss verdict");
    }
    for (const auto& v : prms) {
        require_correct(v.problem_id, v.model_id, v.variant, "PRM verdict");
    }
    for (const auto& p : profiles) {
        require_correct(p.problem_id, p.model_id, Variant::Base, "error profile");
        require_correct(p.problem_id, p.model_id, Variant::TaLM, "error profile");
    }
}

// ---- persistence ---------------------------------------------------------------

namespace {

template <typename T>
std::vector<T> read_records(const fs::path& path) {
    std::vector<T> out;
    for (const json& j : read_jsonl(path)) out.push_back(T::from_json(j));
    return out;
}

template <typename T>
void write_records(const fs::path& path, const std::vector<T>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(r.to_json());
    write_jsonl(path, lines);
}

}  // namespace

std::vector<FinalVerdict> read_final_verdicts(const fs::path& p) {
    return read_records<FinalVerdict>(p);
}
void write_final_verdicts(const fs::path& p, const std::vector<FinalVerdict>& v) {
    write_records(p, v);
}
std::vector<PairVerdict> read_pair_verdicts(const fs::path& p) {
    return read_records<PairVerdict>(p);
}
void write_pair_verdicts(const fs::path& p, const std::vector<PairVerdict>& v) {
    write_records(p, v);
}
std::vector<MissVerdict> read_miss_verdicts(const fs::path& p) {
    return read_records<MissVerdict>(p);
}
void write_miss_verdicts(const fs::path& p, const std::vector<MissVerdict>& v) {
    write_records(p, v);
}
std::vector<PrmVerdict> read_prm_verdicts(const fs::path& p) {
    return read_records<PrmVerdict>(p);
}
void write_prm_verdicts(const fs::path& p, const std::vector<PrmVerdict>& v) {
    write_records(p, v);
}
std::vector<ErrorProfile> read_error_profiles(const fs::path& p) {
    return read_records<ErrorProfile>(p);
}
void write_error_profiles(const fs::path& p, const std::vector<ErrorProfile>& v) {
    write_records(p, v);
}

}  // namespace timaudit::metrics
