#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include "support.hpp"
#include "timaudit/errors.hpp"
#include "timaudit/forge.hpp"
#include "timaudit/metrics.hpp"

using namespace timaudit;
using namespace timaudit::forge;
using corpus::Transcript;
using corpus::Variant;
using test::ScriptedTransport;
using test::TempDir;
using test::make_problem;
using test::make_transcript;
using test::seg_code;
using test::seg_output;
using test::seg_text;

namespace {

gateway::Gateway scripted_gateway(const TempDir& dir, const char* sub = "cache") {
    return gateway::Gateway(gateway::Mode::Live, dir.path / sub,
                            std::make_shared<ScriptedTransport>());
}

// a chosen TaLM solution with two eligible rewrite spans, both carrying 42
Transcript two_span_transcript() {
    return make_transcript(
        "p1", "m", Variant::TaLM,
        {seg_text("We experiment numerically."), seg_code("print(6 * 7)"),
         seg_output("42"), seg_text("The output hints the product is 42."),
         seg_code("print(6 * 7 == 42)"), seg_output("True"),
         seg_text("Therefore the final answer is \\boxed{42}.")},
        "42");
}

}  // namespace

TEST_CASE("the hint sentence is pinned byte for byte") {
    CHECK(std::string(kHintSentence) ==
          "We should treat code snippets and their execution results only as "
          "helpful hints, and derive the solution through mathematical reasoning.");
}

TEST_CASE("hint injection is positional and idempotent") {
    std::vector<Message> conv = {{"user", "Solve the problem."},
                                 {"assistant", "Working on it."}};
    auto injected = inject_hint(conv);
    REQUIRE(injected.size() == 3);
    CHECK(injected[0] == conv[0]);
    CHECK(injected[1].role == "assistant");
    CHECK(injected[1].content == kHintSentence);
    CHECK(injected[2] == conv[1]);

    CHECK(inject_hint(injected) == injected);

    auto lone = inject_hint({{"user", "Solve."}});
    REQUIRE(lone.size() == 2);
    CHECK(lone[1].content == kHintSentence);

    CHECK_THROWS_AS(inject_hint({}), Error);
}

TEST_CASE("transcript digests track content") {
    Transcript a = two_span_transcript();
    Transcript b = two_span_transcript();
    CHECK(transcript_digest(a) == transcript_digest(b));
    CHECK(transcript_digest(a).size() == 64);

    b.segments[3].body += "!";
    CHECK(transcript_digest(a) != transcript_digest(b));
}

TEST_CASE("span selection finds text runs after execution output") {
    auto t = make_transcript(
        "p1", "m", Variant::TaLM,
        {seg_text("Intro text, not eligible."), seg_code("print(1)"), seg_output("1"),
         seg_text("First piece."), seg_text("Second piece, same run."),
         seg_code("print(2)"), seg_output("2"), seg_text("Shorter tail.")},
        "2");

    auto spans = select_spans(t, 2);
    REQUIRE(spans.size() == 2);
    // the two-segment run is longer and sorts first
    CHECK(spans[0].start_ordinal == 3);
    CHECK(spans[0].segment_count == 2);
    CHECK(spans[0].body == "First piece.\n\nSecond piece, same run.");
    CHECK(spans[0].length == spans[0].body.size());
    CHECK(spans[0].transcript_digest == transcript_digest(t));
    CHECK(spans[1].start_ordinal == 7);
    CHECK(spans[1].segment_count == 1);

    auto top1 = select_spans(t, 1);
    REQUIRE(top1.size() == 1);
    CHECK(top1[0].start_ordinal == 3);
}

TEST_CASE("equal length spans keep transcript order") {
    auto t = make_transcript(
        "p1", "m", Variant::TaLM,
        {seg_code("a"), seg_output("1"), seg_text("Same size 00."), seg_code("b"),
         seg_output("2"), seg_text("Same size 11.")},
        "2");
    auto spans = select_spans(t, 2);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].start_ordinal == 2);
    CHECK(spans[1].start_ordinal == 5);
}

TEST_CASE("transcripts without post output text have no eligible span") {
    auto no_tool = make_transcript("p1", "m", Variant::Base,
                                   {seg_text("Pure reasoning only.")}, "42");
    try {
        select_spans(no_tool, 2);
        FAIL("expected NoEligibleSpan");
    } catch (const Error& e) {
        CHECK(e.code() == errc::no_eligible_span);
    }

    // output at the very end leaves nothing to rewrite
    auto tail_output = make_transcript(
        "p1", "m", Variant::TaLM,
        {seg_text("Setup."), seg_code("print(1)"), seg_output("1")}, "1");
    CHECK_THROWS_AS(select_spans(tail_output, 2), Error);
}

TEST_CASE("numeric tokens canonicalize across representations") {
    using V = std::vector<std::string>;
    CHECK(numeric_tokens("the answer is 42") == V{"42/1"});
    CHECK(numeric_tokens("0.5 of the total") == V{"1/2"});
    CHECK(numeric_tokens("1/2 of the total") == V{"1/2"});
    CHECK(numeric_tokens("3/6 reduces") == V{"1/2"});
    CHECK(numeric_tokens("3.50 units") == V{"7/2"});
    CHECK(numeric_tokens(".5 exactly") == V{"1/2"});
    CHECK(numeric_tokens("007 agents") == V{"7/1"});
    CHECK(numeric_tokens("points (2, 3) and (4, 5)") == V{"2/1", "3/1", "4/1", "5/1"});

    // identifier fragments are not numbers
    CHECK(numeric_tokens("x2 is the 2nd root of y") == V{});
    CHECK(numeric_tokens("f(2) = 4") == V{"2/1", "4/1"});

    // division by zero stays two separate integers
    CHECK(numeric_tokens("10/0 is undefined") == V{"10/1", "0/1"});

    // spaced slashes are division, not fraction literals
    CHECK(numeric_tokens("10 / 4") == V{"10/1", "4/1"});

    // literals wider than 64 bits fall back to trimmed digit strings
    CHECK(numeric_tokens("12345678901234567890123") == V{"12345678901234567890123"});
}

TEST_CASE("result preservation checks numbers and the final answer") {
    CHECK(preserves_results("the answer is 42", "we computed 42 directly", "42"));
    CHECK(!preserves_results("the answer is 42", "we computed 43 instead", "42"));

    // representation changes are fine for intermediate values
    CHECK(preserves_results("half is 0.5", "half is 1/2", ""));

    // multiplicity is not required, presence is
    CHECK(preserves_results("2 + 2 = 4", "doubling 2 gives 4", ""));

    // extra numbers in the rewrite are allowed
    CHECK(preserves_results("we get 7", "step 1 then step 2 gives 7", ""));

    // a final answer quoted in the span must survive verbatim
    CHECK(!preserves_results("so the result is 3/4 of the area",
                             "so the result is 0.75 of the area", "3/4"));
    CHECK(preserves_results("so the result is 3/4 of the area",
                            "numerically we land on 3/4 of the area", "3/4"));

    // ...but only when the span actually contained it
    CHECK(preserves_results("intermediate value 6", "we see 6", "42"));

    // a span with no numbers constrains nothing numerically
    CHECK(preserves_results("by symmetry the claim holds", "by computation", ""));
}

TEST_CASE("degradation requests sample the rewrite model") {
    TempDir dir;
    auto gw = scripted_gateway(dir);
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();
    auto spans = select_spans(chosen, 2);

    std::vector<std::string> warnings;
    auto candidates =
        request_degradation(problem, chosen, spans[0], gw, "rewriter-1", &warnings);
    REQUIRE(candidates.size() == 2);
    CHECK(candidates[0].sample_index == 1);
    CHECK(candidates[1].sample_index == 2);
    CHECK(candidates[0].rewritten_body == "By computation, the claim follows.");
    CHECK(candidates[1].rewritten_body.rfind("The computation suggests ", 0) == 0);
    CHECK(candidates[1].rewritten_body.find(spans[0].body) != std::string::npos);
    CHECK(!candidates[0].accepted);  // acceptance is the caller's decision
    CHECK(warnings.empty());

    TextSpan empty_span = spans[0];
    empty_span.body.clear();
    CHECK_THROWS_AS(
        request_degradation(problem, chosen, empty_span, gw, "rewriter-1", nullptr),
        Error);
}

TEST_CASE("a short sample batch is reported, not fatal") {
    struct OneSampleTransport : gateway::Transport {
        gateway::JudgeResponse call_chat(const gateway::JudgeRequest&) override {
            gateway::JudgeResponse r;
            r.raw_text.push_back("By computation, the claim follows.");
            return r;
        }
        std::vector<double> call_prm(const gateway::PrmRequest&) override { return {}; }
    };
    TempDir dir;
    gateway::Gateway gw(gateway::Mode::Live, dir.path / "cache",
                        std::make_shared<OneSampleTransport>());
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();
    auto spans = select_spans(chosen, 2);

    std::vector<std::string> warnings;
    auto candidates =
        request_degradation(problem, chosen, spans[0], gw, "rewriter-1", &warnings);
    CHECK(candidates.size() == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("1 of 2") != std::string::npos);
}

TEST_CASE("pair assembly swaps exactly the chosen span") {
    TempDir dir;
    auto judge = scripted_gateway(dir);
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();
    auto spans = select_spans(chosen, 2);
    const TextSpan& span = spans[0];  // the boxed final span is longer

    DegradationCandidate cand;
    cand.span = span;
    cand.rewritten_body = "The computation suggests " + span.body;
    cand.sample_index = 2;
    cand.accepted = true;

    PreferencePair pair = assemble_pair(problem, chosen, true, cand, judge, "judge-1");
    CHECK(pair.problem_id == "p1");
    CHECK(pair.chosen.segments.size() == pair.rejected.segments.size());
    CHECK(pair.rejected.final_answer == "42");
    int differing = 0;
    for (std::size_t i = 0; i < pair.chosen.segments.size(); ++i) {
        CHECK(pair.rejected.segments[i].ordinal == static_cast<int>(i));
        if (pair.chosen.segments[i].body != pair.rejected.segments[i].body) {
            ++differing;
            CHECK(pair.chosen.segments[i].kind == corpus::SegmentKind::Text);
        }
    }
    CHECK(differing == 1);
    CHECK(pair.degraded_span.start_ordinal == span.start_ordinal);
    validate_pair_locality(pair);
}

TEST_CASE("pair assembly enforces its gates") {
    TempDir dir;
    auto judge = scripted_gateway(dir);
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();
    auto spans = select_spans(chosen, 2);

    DegradationCandidate cand;
    cand.span = spans[0];
    cand.rewritten_body = "The computation suggests " + spans[0].body;
    cand.sample_index = 2;

    SUBCASE("unaccepted candidates never assemble") {
        cand.accepted = false;
        try {
            assemble_pair(problem, chosen, true, cand, judge, "judge-1");
            FAIL("expected Precondition");
        } catch (const Error& e) {
            CHECK(e.code() == errc::precondition);
        }
    }
    SUBCASE("an incorrect chosen solution fails the gate") {
        cand.accepted = true;
        try {
            assemble_pair(problem, chosen, false, cand, judge, "judge-1");
            FAIL("expected CorrectnessGateFailed");
        } catch (const Error& e) {
            CHECK(e.code() == errc::correctness_gate_failed);
        }
    }
    SUBCASE("a rewrite that loses the final answer fails the gate") {
        cand.accepted = true;
        cand.rewritten_body = "By computation, 42.";  // extraction now misses 42
        try {
            assemble_pair(problem, chosen, true, cand, judge, "judge-1");
            FAIL("expected CorrectnessGateFailed");
        } catch (const Error& e) {
            CHECK(e.code() == errc::correctness_gate_failed);
        }
    }
    SUBCASE("a span from a stale transcript version is rejected") {
        cand.accepted = true;
        Transcript edited = chosen;
        edited.segments[0].body = "We experiment numerically (edited).";
        try {
            assemble_pair(problem, edited, true, cand, judge, "judge-1");
            FAIL("expected SpanMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == errc::span_mismatch);
        }
    }
    SUBCASE("a tampered span body is rejected even with a fresh digest") {
        cand.accepted = true;
        cand.span.body += " tampered";
        CHECK_THROWS_AS(assemble_pair(problem, chosen, true, cand, judge, "judge-1"),
                        Error);
    }
}

TEST_CASE("pair locality rejects non text or non local edits") {
    PreferencePair pair;
    pair.problem_id = "p1";
    pair.chosen = two_span_transcript();
    pair.rejected = two_span_transcript();

    SUBCASE("identical sides are not a pair") {
        try {
            validate_pair_locality(pair);
            FAIL("expected SpanMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == errc::span_mismatch);
        }
    }
    SUBCASE("an edited code segment is out of bounds") {
        pair.rejected.segments[1].body = "print(7 * 6)";
        try {
            validate_pair_locality(pair);
            FAIL("expected SpanMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == errc::span_mismatch);
        }
    }
    SUBCASE("an edited output segment is out of bounds") {
        pair.rejected.segments[2].body = "43";
        CHECK_THROWS_AS(validate_pair_locality(pair), Error);
    }
    SUBCASE("one rewritten text run passes") {
        pair.rejected.segments[3].body = "The computation suggests 42.";
        validate_pair_locality(pair);
    }
    SUBCASE("two separated text edits straddling code are rejected") {
        pair.rejected.segments[0].body = "Edited intro.";
        pair.rejected.segments[3].body = "Edited tail with 42.";
        CHECK_THROWS_AS(validate_pair_locality(pair), Error);
    }
}

TEST_CASE("the forge yields one pair per span that survives all gates") {
    TempDir dir;
    auto rewriter = scripted_gateway(dir, "rewrite-cache");
    auto judge = scripted_gateway(dir, "judge-cache");
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();

    std::vector<std::string> warnings;
    auto pairs =
        forge_pairs(problem, chosen, true, rewriter, "rw-1", judge, "judge-1", &warnings);
    REQUIRE(pairs.size() == 2);
    CHECK(warnings.empty());
    for (const auto& pair : pairs) {
        CHECK(pair.rejected.final_answer == "42");
        // the accepted rewrite is always the second, marker-bearing sample
        bool found_marker = false;
        for (const auto& seg : pair.rejected.segments) {
            if (seg.kind == corpus::SegmentKind::Text &&
                seg.body.find("The computation suggests") != std::string::npos) {
                found_marker = true;
            }
        }
        CHECK(found_marker);
    }
    CHECK(pairs[0].degraded_span.start_ordinal != pairs[1].degraded_span.start_ordinal);
}

TEST_CASE("rewrites that drop results are logged and skipped") {
    TempDir dir;
    auto rewriter = scripted_gateway(dir, "rewrite-cache");
    auto judge = scripted_gateway(dir, "judge-cache");
    auto problem = make_problem("p1", "99");
    // [stubborn]: the scripted rewriter drops all numbers in both samples
    auto chosen = make_transcript(
        "p1", "m", Variant::TaLM,
        {seg_text("Try it."), seg_code("print(99)"), seg_output("99"),
         seg_text("[stubborn] The value 99 is confirmed; answer: 99.")},
        "99");

    std::vector<std::string> warnings;
    auto pairs =
        forge_pairs(problem, chosen, true, rewriter, "rw-1", judge, "judge-1", &warnings);
    CHECK(pairs.empty());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("preserved its results") != std::string::npos);
}

TEST_CASE("gate failures at assembly are warnings, not aborts") {
    TempDir dir;
    auto rewriter = scripted_gateway(dir, "rewrite-cache");
    auto judge = scripted_gateway(dir, "judge-cache");
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();

    std::vector<std::string> warnings;
    auto pairs = forge_pairs(problem, chosen, false, rewriter, "rw-1", judge, "judge-1",
                             &warnings);
    CHECK(pairs.empty());
    REQUIRE(warnings.size() == 2);  // one per span
    CHECK(warnings[0].find("not final-correct") != std::string::npos);
}

TEST_CASE("training pairs serialize in conversation form") {
    TempDir dir;
    auto judge = scripted_gateway(dir);
    auto problem = make_problem("p1", "42");
    Transcript chosen = two_span_transcript();
    auto spans = select_spans(chosen, 1);

    DegradationCandidate cand;
    cand.span = spans[0];
    cand.rewritten_body = "The computation suggests " + spans[0].body;
    cand.sample_index = 2;
    cand.accepted = true;
    PreferencePair pair = assemble_pair(problem, chosen, true, cand, judge, "judge-1");

    ordered_json doc = pair_to_training_json(pair, problem.statement);
    CHECK(doc.at("problem_id") == "p1");
    REQUIRE(doc.at("input").size() == 1);
    CHECK(doc["input"][0].at("role") == "user");
    CHECK(doc["input"][0].at("content") == problem.statement);
    REQUIRE(doc.at("chosen").size() == 1);
    CHECK(doc["chosen"][0].at("role") == "assistant");
    CHECK(doc["chosen"][0].at("content") == metrics::transcript_to_text(pair.chosen));
    CHECK(doc["rejected"][0].at("content") ==
          metrics::transcript_to_text(pair.rejected));
    CHECK(doc.at("metadata").at("temperature") == 0.6);
    CHECK(doc["metadata"].at("beta") == 0.5);
    CHECK(doc["metadata"].at("lr_multiplier") == 0.2);
    CHECK(doc["metadata"].at("batch_size") == 4);

    // field order is part of the trainer contract
    std::string dumped = doc.dump();
    CHECK(dumped.find("\"problem_id\"") < dumped.find("\"input\""));
    CHECK(dumped.find("\"input\"") < dumped.find("\"chosen\""));
    CHECK(dumped.find("\"chosen\"") < dumped.find("\"rejected\""));
    CHECK(dumped.find("\"rejected\"") < dumped.find("\"metadata\""));

    fs::path out = dir.path / "pairs.jsonl";
    write_pairs(out, {pair}, {problem});
    auto lines = read_jsonl(out);
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].at("problem_id") == "p1");

    try {
        write_pairs(dir.path / "bad.jsonl", {pair}, {});
        FAIL("expected JoinFailure");
    } catch (const Error& e) {
        CHECK(e.code() == errc::join_failure);
    }
}
