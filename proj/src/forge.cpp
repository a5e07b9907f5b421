#include "timaudit/forge.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "timaudit/errors.hpp"
#include "timaudit/metrics.hpp"
#include "timaudit/numeric.hpp"
#include "timaudit/prompts.hpp"

namespace timaudit::forge {

using corpus::Segment;
using corpus::SegmentKind;
using corpus::Transcript;

std::vector<Message> inject_hint(std::vector<Message> conversation) {
    if (conversation.empty()) {
        raise(errc::precondition, "cannot inject a hint into an empty conversation");
    }
    if (conversation.size() > 1 && conversation[1].role == "assistant" &&
        conversation[1].content == kHintSentence) {
        return conversation;
    }
    conversation.insert(conversation.begin() + 1,
                        Message{"assistant", kHintSentence});
    return conversation;
}

// ---- span selection --------------------------------------------------------------

std::string transcript_digest(const Transcript& t) {
    return sha256_hex(t.to_json().dump());
}

std::vector<TextSpan> select_spans(const Transcript& t, std::size_t n) {
    std::vector<TextSpan> spans;
    const auto& segs = t.segments;
    std::string digest = transcript_digest(t);
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        if (segs[i].kind != SegmentKind::Output ||
            segs[i + 1].kind != SegmentKind::Text) {
            continue;
        }
        TextSpan span;
        span.problem_id = t.problem_id;
        span.model_id = t.model_id;
        span.variant = t.variant;
        span.transcript_digest = digest;
        span.start_ordinal = segs[i + 1].ordinal;
        std::size_t j = i + 1;
        while (j < segs.size() && segs[j].kind == SegmentKind::Text) {
            if (!span.body.empty()) span.body += "\n\n";
            span.body += segs[j].body;
            ++span.segment_count;
            ++j;
        }
        span.length = span.body.size();
        spans.push_back(std::move(span));
    }
    if (spans.empty()) {
        raise(errc::no_eligible_span,
              "transcript " + t.problem_id + "/" + t.model_id +
                  " has no text following an execution output");
    }
    std::stable_sort(spans.begin(), spans.end(),
                     [](const TextSpan& a, const TextSpan& b) {
                         return a.length > b.length;  // stable keeps earlier first on ties
                     });
    if (spans.size() > n) spans.resize(n);
    return spans;
}

// ---- controlled degradation --------------------------------------------------------

namespace {

std::string text_before_span(const Transcript& t, int start_ordinal) {
    Transcript head;
    head.problem_id = t.problem_id;
    head.model_id = t.model_id;
    head.variant = t.variant;
    for (const Segment& s : t.segments) {
        if (s.ordinal >= start_ordinal) break;
        head.segments.push_back(s);
    }
    return metrics::transcript_to_text(head);
}

}  // namespace

std::vector<DegradationCandidate> request_degradation(
    const corpus::Problem& problem, const Transcript& chosen, const TextSpan& span,
    gateway::Gateway& gw, const std::string& model_id,
    std::vector<std::string>* warnings) {
    if (span.body.empty()) {
        raise(errc::precondition, "cannot degrade an empty span");
    }
    auto req = prompts::make_request(
        gateway::TemplateId::Degradation,
        {{"problem", problem.statement},
         {"solution", text_before_span(chosen, span.start_ordinal)},
         {"target_span", span.body}},
        model_id);
    gateway::JudgeResponse resp = gw.submit(req);
    if (static_cast<int>(resp.raw_text.size()) < req.params.n_samples && warnings) {
        warnings->push_back("rewrite sampling for " + problem.id + " span at ordinal " +
                            std::to_string(span.start_ordinal) + " returned " +
                            std::to_string(resp.raw_text.size()) + " of " +
                            std::to_string(req.params.n_samples) + " candidates");
    }
    std::vector<DegradationCandidate> out;
    for (std::size_t i = 0; i < resp.raw_text.size(); ++i) {
        DegradationCandidate c;
        c.span = span;
        c.rewritten_body = resp.raw_text[i];
        c.sample_index = static_cast<int>(i) + 1;
        out.push_back(std::move(c));
    }
    return out;
}

// ---- result preservation ------------------------------------------------------------

namespace {

bool word_char(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

// canonical form of an unsigned numeric literal; exact rational "num/den"
// when it fits 64 bits, else a trimmed digit string
std::string canonical_number(const std::string& integer_part,
                             const std::string& fraction_part) {
    if (integer_part.size() + fraction_part.size() <= 18) {
        std::int64_t scale = 1;
        std::int64_t value = 0;
        for (char c : integer_part) value = value * 10 + (c - '0');
        for (char c : fraction_part) {
            value = value * 10 + (c - '0');
            scale *= 10;
        }
        Rat r = Rat::of(value, scale);
        return std::to_string(r.num) + "/" + std::to_string(r.den);
    }
    std::string i = integer_part, f = fraction_part;
    while (i.size() > 1 && i.front() == '0') i.erase(i.begin());
    while (!f.empty() && f.back() == '0') f.pop_back();
    if (i.empty()) i = "0";
    return f.empty() ? i : i + "." + f;
}

struct NumberToken {
    std::string integer_part;
    std::string fraction_part;
    std::size_t begin = 0;
    std::size_t end = 0;  // one past last char
};

// lexes unsigned integer/decimal literals, skipping digits glued to letters
std::vector<NumberToken> lex_numbers(const std::string& text) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!digit(text[i]) && !(text[i] == '.' && i + 1 < text.size() && digit(text[i + 1]))) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        std::string ipart, fpart;
        while (i < text.size() && digit(text[i])) ipart += text[i++];
        if (i < text.size() && text[i] == '.' && i + 1 < text.size() && digit(text[i + 1])) {
            ++i;
            while (i < text.size() && digit(text[i])) fpart += text[i++];
        }
        bool glued_left = begin > 0 && word_char(text[begin - 1]);
        bool glued_right = i < text.size() && word_char(text[i]);
        if (glued_left || glued_right) {
            // identifier fragment like x2 or 2nd: not a numeric result
            while (i < text.size() && (word_char(text[i]) || digit(text[i]))) ++i;
            continue;
        }
        out.push_back(NumberToken{ipart, fpart, begin, i});
    }
    return out;
}

}  // namespace

std::vector<std::string> numeric_tokens(const std::string& text) {
    std::vector<NumberToken> raw = lex_numbers(text);
    std::vector<std::string> out;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const NumberToken& t = raw[k];
        // integer/integer with no spaces reads as one fraction token
        if (t.fraction_part.empty() && k + 1 < raw.size()) {
            const NumberToken& u = raw[k + 1];
            if (u.fraction_part.empty() && t.end < text.size() && text[t.end] == '/' &&
                u.begin == t.end + 1 && t.integer_part.size() <= 18 &&
                u.integer_part.size() <= 18) {
                std::int64_t num = 0, den = 0;
                for (char c : t.integer_part) num = num * 10 + (c - '0');
                for (char c : u.integer_part) den = den * 10 + (c - '0');
                if (den != 0) {
                    Rat r = Rat::of(num, den);
                    out.push_back(std::to_string(r.num) + "/" + std::to_string(r.den));
                    ++k;
                    continue;
                }
            }
        }
        out.push_back(canonical_number(t.integer_part, t.fraction_part));
    }
    return out;
}

bool preserves_results(const std::string& original_span,
                       const std::string& rewritten_body,
                       const std::string& transcript_final_answer) {
    std::vector<std::string> needed = numeric_tokens(original_span);
    std::vector<std::string> have = numeric_tokens(rewritten_body);
    std::map<std::string, int> pool;
    for (const auto& tok : have) ++pool[tok];
    for (const auto& tok : needed) {
        auto it = pool.find(tok);
        if (it == pool.end()) return false;  // multiplicity not required, presence is
    }
    if (!transcript_final_answer.empty() &&
        original_span.find(transcript_final_answer) != std::string::npos &&
        rewritten_body.find(transcript_final_answer) == std::string::npos) {
        return false;
    }
    return true;
}

// ---- pair assembly ----------------------------------------------------------------

namespace {

// locates the span inside the transcript and confirms it is byte-fresh
std::pair<std::size_t, std::size_t> locate_span(const Transcript& chosen,
                                                const TextSpan& span) {
    if (span.transcript_digest != transcript_digest(chosen)) {
        raise(errc::span_mismatch,
              "span for " + span.problem_id + " was cut from a different version "
              "of the transcript");
    }
    const auto& segs = chosen.segments;
    std::size_t first = segs.size();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segs[i].ordinal == span.start_ordinal) {
            first = i;
            break;
        }
    }
    if (first == segs.size() || first == 0 ||
        segs[first - 1].kind != SegmentKind::Output) {
        raise(errc::span_mismatch, "span start ordinal " +
                                       std::to_string(span.start_ordinal) +
                                       " does not follow an output segment");
    }
    std::size_t last = first + static_cast<std::size_t>(span.segment_count);
    if (last > segs.size()) {
        raise(errc::span_mismatch, "span overruns the transcript");
    }
    std::string joined;
    for (std::size_t i = first; i < last; ++i) {
        if (segs[i].kind != SegmentKind::Text) {
            raise(errc::span_mismatch, "span covers a non-text segment");
        }
        if (!joined.empty()) joined += "\n\n";
        joined += segs[i].body;
    }
    if (joined != span.body) {
        raise(errc::span_mismatch, "span body does not match the transcript");
    }
    return {first, last};
}

}  // namespace

PreferencePair assemble_pair(const corpus::Problem& problem,
                             const Transcript& chosen, bool chosen_correct,
                             const DegradationCandidate& candidate,
                             gateway::Gateway& judge, const std::string& judge_model) {
    if (!candidate.accepted) {
        raise(errc::precondition, "only accepted rewrite candidates form pairs");
    }
    if (!chosen_correct) {
        raise(errc::correctness_gate_failed,
              "chosen solution for " + problem.id + " is not final-correct");
    }
    auto [first, last] = locate_span(chosen, candidate.span);

    Transcript rejected;
    rejected.problem_id = chosen.problem_id;
    rejected.model_id = chosen.model_id;
    rejected.variant = chosen.variant;
    for (std::size_t i = 0; i < first; ++i) rejected.segments.push_back(chosen.segments[i]);
    rejected.segments.push_back(
        Segment{0, SegmentKind::Text, candidate.rewritten_body});
    for (std::size_t i = last; i < chosen.segments.size(); ++i) {
        rejected.segments.push_back(chosen.segments[i]);
    }
    for (std::size_t i = 0; i < rejected.segments.size(); ++i) {
        rejected.segments[i].ordinal = static_cast<int>(i);
    }
    rejected.final_answer = corpus::extract_final_answer(rejected);

    metrics::FinalVerdict verdict =
        metrics::judge_final_answer(problem, rejected, judge, judge_model);
    if (!verdict.correct) {
        raise(errc::correctness_gate_failed,
              "rewritten solution for " + problem.id + " no longer reaches the "
              "correct final answer");
    }

    PreferencePair pair;
    pair.problem_id = problem.id;
    pair.chosen = chosen;
    pair.rejected = rejected;
    pair.degraded_span = candidate.span;
    validate_pair_locality(pair);
    return pair;
}

void validate_pair_locality(const PreferencePair& pair) {
    const auto& c = pair.chosen.segments;
    const auto& r = pair.rejected.segments;
    std::size_t prefix = 0;
    while (prefix < c.size() && prefix < r.size() &&
           c[prefix].kind == r[prefix].kind && c[prefix].body == r[prefix].body) {
        ++prefix;
    }
    std::size_t ci = c.size(), ri = r.size();
    while (ci > prefix && ri > prefix && c[ci - 1].kind == r[ri - 1].kind &&
           c[ci - 1].body == r[ri - 1].body) {
        --ci;
        --ri;
    }
    // everything left in the middle must be text on both sides
    for (std::size_t i = prefix; i < ci; ++i) {
        if (c[i].kind != SegmentKind::Text) {
            raise(errc::span_mismatch,
                  "pair for " + pair.problem_id + " alters a code or output segment");
        }
    }
    for (std::size_t i = prefix; i < ri; ++i) {
        if (r[i].kind != SegmentKind::Text) {
            raise(errc::span_mismatch,
                  "pair for " + pair.problem_id + " alters a code or output segment");
        }
    }
    if (ci == prefix && ri == prefix) {
        raise(errc::span_mismatch,
              "pair for " + pair.problem_id + " has identical chosen and rejected");
    }
}

std::vector<PreferencePair> forge_pairs(const corpus::Problem& problem,
                                        const Transcript& chosen, bool chosen_correct,
                                        gateway::Gateway& rewriter,
                                        const std::string& rewrite_model,
                                        gateway::Gateway& judge,
                                        const std::string& judge_model,
                                        std::vector<std::string>* warnings) {
    std::vector<PreferencePair> pairs;
    std::vector<TextSpan> spans = select_spans(chosen, 2);
    for (const TextSpan& span : spans) {
        std::vector<DegradationCandidate> candidates =
            request_degradation(problem, chosen, span, rewriter, rewrite_model, warnings);
        for (auto& cand : candidates) {
            cand.accepted =
                preserves_results(span.body, cand.rewritten_body, chosen.final_answer);
        }
        // highest accepted sample index wins for this span
        const DegradationCandidate* pick = nullptr;
        for (const auto& cand : candidates) {
            if (cand.accepted && (!pick || cand.sample_index > pick->sample_index)) {
                pick = &cand;
            }
        }
        if (!pick) {
            if (warnings) {
                warnings->push_back("no rewrite for " + problem.id + " span at ordinal " +
                                    std::to_string(span.start_ordinal) +
                                    " preserved its results");
            }
            continue;
        }
        try {
            pairs.push_back(assemble_pair(problem, chosen, chosen_correct, *pick,
                                          judge, judge_model));
        } catch (const Error& e) {
            if (e.code() != errc::correctness_gate_failed) throw;
            if (warnings) warnings->push_back(e.what());
        }
    }
    return pairs;
}

ordered_json pair_to_training_json(const PreferencePair& pair,
                                   const std::string& problem_statement) {
    ordered_json doc;
    doc["problem_id"] = pair.problem_id;
    doc["input"] = ordered_json::array(
        {ordered_json{{"role", "user"}, {"content", problem_statement}}});
    doc["chosen"] = ordered_json::array(
        {ordered_json{{"role", "assistant"},
                      {"content", metrics::transcript_to_text(pair.chosen)}}});
    doc["rejected"] = ordered_json::array(
        {ordered_json{{"role", "assistant"},
                      {"content", metrics::transcript_to_text(pair.rejected)}}});
    doc["metadata"] = ordered_json{{"temperature", pair.metadata.temperature},
                                   {"beta", pair.metadata.beta},
                                   {"lr_multiplier", pair.metadata.lr_multiplier},
                                   {"batch_size", pair.metadata.batch_size}};
    return doc;
}

void write_pairs(const fs::path& path, const std::vector<PreferencePair>& pairs,
                 const std::vector<corpus::Problem>& problems) {
    std::map<std::string, const corpus::Problem*> by_id;
    for (const auto& p : problems) by_id[p.id] = &p;
    std::string out;
    for (const auto& pair : pairs) {
        auto it = by_id.find(pair.problem_id);
        if (it == by_id.end()) {
            raise(errc::join_failure,
                  "pair references unknown problem " + pair.problem_id);
        }
        out += pair_to_training_json(pair, it->second->statement).dump();
        out += "\n";
    }
    write_file_atomic(path, out);
}

}  // namespace timaudit::forge
