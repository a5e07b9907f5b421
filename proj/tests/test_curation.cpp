#include <doctest.h>

#include <atomic>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "support.hpp"
#include "timaudit/curation.hpp"
#include "timaudit/errors.hpp"

using namespace timaudit;
using namespace timaudit::curation;
using corpus::Problem;
using corpus::Split;
using test::ScriptedTransport;
using test::TempDir;
using test::make_problem;

namespace {

gateway::Gateway scripted_gateway(const TempDir& dir) {
    return gateway::Gateway(gateway::Mode::Live, dir.path / "cache",
                            std::make_shared<ScriptedTransport>());
}

// junk on the first exchange, a valid verdict once the repair suffix appears
struct RepairableTransport : gateway::Transport {
    std::atomic<int> calls{0};
    bool junk_always = false;

    gateway::JudgeResponse call_chat(const gateway::JudgeRequest& req) override {
        calls.fetch_add(1);
        bool is_repair =
            req.rendered_prompt.find("could not be parsed") != std::string::npos;
        gateway::JudgeResponse r;
        if (!is_repair || junk_always) {
            r.raw_text.push_back("I would rather discuss something else.");
        } else {
            r.raw_text.push_back(
                "{\"python_usefulness\": true, \"python_sufficiency\": false, "
                "\"recommendation\": \"Python for Verification\"}");
        }
        return r;
    }
    std::vector<double> call_prm(const gateway::PrmRequest& req) override {
        return std::vector<double>(req.steps.size(), 0.9);
    }
};

}  // namespace

TEST_CASE("recommendation strings round trip") {
    for (Recommendation r :
         {Recommendation::PurePython, Recommendation::PythonPlusReasoning,
          Recommendation::PythonForVerification, Recommendation::PythonForExploration,
          Recommendation::MinimalPythonRole}) {
        CHECK(recommendation_from_string(to_string(r)) == r);
    }
    CHECK(to_string(Recommendation::PythonPlusReasoning) ==
          "Python + LLM Insight/Reasoning");
}

TEST_CASE("recommendation parsing is a case insensitive prefix match") {
    CHECK(recommendation_from_string("pure python") == Recommendation::PurePython);
    CHECK(recommendation_from_string("PURE") == Recommendation::PurePython);
    CHECK(recommendation_from_string("python + llm insight") ==
          Recommendation::PythonPlusReasoning);
    CHECK(recommendation_from_string("Python for Verification (numeric check)") ==
          Recommendation::PythonForVerification);
    CHECK(recommendation_from_string("  minimal python role  ") ==
          Recommendation::MinimalPythonRole);

    auto rejects = [](const std::string& s) {
        try {
            recommendation_from_string(s);
            FAIL_CHECK("accepted: " << s);
        } catch (const Error& e) {
            CHECK(e.code() == errc::unparsable_verdict);
        }
    };
    rejects("Python for");  // verification and exploration both match
    rejects("Python");      // three options match
    rejects("Java");
    rejects("");
}

TEST_CASE("curation verdicts round trip through json") {
    CurationVerdict v;
    v.problem_id = "p1";
    v.python_usefulness = true;
    v.python_sufficiency = false;
    v.recommendation = Recommendation::PythonForExploration;
    v.reasoning.mathematical_domain = "number theory";
    v.reasoning.techniques_required = "sieving";
    CurationVerdict back = CurationVerdict::from_json(v.to_json());
    CHECK(back.problem_id == "p1");
    CHECK(back.python_usefulness);
    CHECK(!back.python_sufficiency);
    CHECK(back.recommendation == Recommendation::PythonForExploration);
    CHECK(back.reasoning.mathematical_domain == "number theory");
    CHECK(back.reasoning.techniques_required == "sieving");

    TempDir dir;
    write_curation_verdicts(dir.path / "v.jsonl", {v});
    auto read = read_curation_verdicts(dir.path / "v.jsonl");
    REQUIRE(read.size() == 1);
    CHECK(read[0].recommendation == Recommendation::PythonForExploration);
}

TEST_CASE("difficulty filter only constrains rated problems") {
    Problem unrated = make_problem("p1");
    CHECK(filter_difficulty(unrated, 9.5));

    Problem rated = make_problem("p2");
    rated.difficulty = 6.0;
    CHECK(filter_difficulty(rated, 6.0));
    CHECK(filter_difficulty(rated, 5.9));
    CHECK(!filter_difficulty(rated, 6.1));
}

TEST_CASE("admission requires useful but insufficient code") {
    CurationVerdict v;
    v.python_usefulness = true;
    v.python_sufficiency = false;
    CHECK(admit(v));
    v.python_sufficiency = true;
    CHECK(!admit(v));
    v.python_usefulness = false;
    CHECK(!admit(v));
    v.python_sufficiency = false;
    CHECK(!admit(v));
}

TEST_CASE("classification extracts the judged annotation") {
    TempDir dir;
    auto gw = scripted_gateway(dir);

    CurationVerdict plain = classify_problem(make_problem("p1"), gw, "judge-1");
    CHECK(plain.problem_id == "p1");
    CHECK(plain.python_usefulness);
    CHECK(!plain.python_sufficiency);
    CHECK(plain.recommendation == Recommendation::PythonPlusReasoning);
    CHECK(plain.reasoning.mathematical_domain == "synthetic");

    Problem pencil = make_problem("p2");
    pencil.statement += " [pencil]";
    CHECK(!classify_problem(pencil, gw, "judge-1").python_usefulness);

    Problem pure = make_problem("p3");
    pure.statement += " [pure]";
    CHECK(classify_problem(pure, gw, "judge-1").python_sufficiency);

    Problem explore = make_problem("p4");
    explore.statement += " [explore]";
    CHECK(classify_problem(explore, gw, "judge-1").recommendation ==
          Recommendation::PythonForExploration);
}

TEST_CASE("an unparsable reply earns exactly one repair retry") {
    TempDir dir;
    auto transport = std::make_shared<RepairableTransport>();
    gateway::Gateway gw(gateway::Mode::Live, dir.path / "cache", transport);

    CurationVerdict v = classify_problem(make_problem("p1"), gw, "judge-1");
    CHECK(transport->calls == 2);
    CHECK(v.recommendation == Recommendation::PythonForVerification);

    // junk twice: the second failure surfaces, with no third attempt
    auto stubborn = std::make_shared<RepairableTransport>();
    stubborn->junk_always = true;
    gateway::Gateway gw2(gateway::Mode::Live, dir.path / "cache2", stubborn);
    try {
        classify_problem(make_problem("p2"), gw2, "judge-1");
        FAIL("expected UnparsableVerdict");
    } catch (const Error& e) {
        CHECK(e.code() == errc::unparsable_verdict);
    }
    CHECK(stubborn->calls == 2);
}

TEST_CASE("provider failures are not repaired") {
    struct DownTransport : gateway::Transport {
        std::atomic<int> calls{0};
        gateway::JudgeResponse call_chat(const gateway::JudgeRequest&) override {
            calls.fetch_add(1);
            raise(errc::judge_unavailable, "down");
        }
        std::vector<double> call_prm(const gateway::PrmRequest&) override { return {}; }
    };
    TempDir dir;
    auto transport = std::make_shared<DownTransport>();
    gateway::Gateway gw(gateway::Mode::Live, dir.path / "cache", transport);
    try {
        classify_problem(make_problem("p1"), gw, "judge-1");
        FAIL("expected JudgeUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == errc::judge_unavailable);
    }
    CHECK(transport->calls == 1);
}

TEST_CASE("split assignment is a deterministic partition") {
    std::vector<Problem> admitted;
    for (int i = 0; i < 40; ++i) {
        Problem p = make_problem("p" + std::to_string(i), "42",
                                 i % 2 == 0 ? corpus::Source::Aime
                                            : corpus::Source::OmniMath);
        if (i % 2 == 1) p.difficulty = 5.0 + (i % 8) * 0.5;
        admitted.push_back(p);
    }
    SplitRatios ratios;
    ratios.eval_fraction = 0.5;
    ratios.dev_fraction_of_train = 0.2;
    ratios.seed = 11;

    auto splits = assign_splits(admitted, ratios);
    CHECK(splits.size() == admitted.size());
    for (const Problem& p : admitted) CHECK(splits.count(p.id) == 1);

    auto again = assign_splits(admitted, ratios);
    CHECK(again == splits);

    SplitRatios other = ratios;
    other.seed = 12;
    CHECK(assign_splits(admitted, other) != splits);
}

TEST_CASE("split counts follow the stratum rounding rule") {
    // one stratum: 10 unrated problems from one source
    std::vector<Problem> admitted;
    for (int i = 0; i < 10; ++i) {
        admitted.push_back(make_problem("p" + std::to_string(i)));
    }
    SplitRatios ratios;
    ratios.eval_fraction = 0.595;  // llround(5.95) = 6
    ratios.dev_fraction_of_train = 0.25;  // llround(0.25 * 4) = 1
    ratios.seed = 3;

    auto splits = assign_splits(admitted, ratios);
    std::map<Split, int> counts;
    for (const auto& [id, s] : splits) counts[s]++;
    CHECK(counts[Split::Eval] == 6);
    CHECK(counts[Split::Dev] == 1);
    CHECK(counts[Split::Train] == 3);
}

TEST_CASE("strata are split independently") {
    // two strata of 5; llround(0.5 * 5) = 3 eval in each, not 5 of 10
    std::vector<Problem> admitted;
    for (int i = 0; i < 5; ++i) {
        admitted.push_back(
            make_problem("a" + std::to_string(i), "42", corpus::Source::Aime));
    }
    for (int i = 0; i < 5; ++i) {
        Problem p = make_problem("o" + std::to_string(i), "42",
                                 corpus::Source::OmniMath);
        p.difficulty = 6.5;
        admitted.push_back(p);
    }
    SplitRatios ratios;
    ratios.eval_fraction = 0.5;
    ratios.dev_fraction_of_train = 0.2;
    ratios.seed = 5;

    auto splits = assign_splits(admitted, ratios);
    int eval_a = 0, eval_o = 0;
    for (const auto& [id, s] : splits) {
        if (s != Split::Eval) continue;
        (id[0] == 'a' ? eval_a : eval_o)++;
    }
    CHECK(eval_a == 3);
    CHECK(eval_o == 3);
}

TEST_CASE("split assignment validates its inputs") {
    CHECK_THROWS_AS(assign_splits({}, SplitRatios{}), Error);

    std::vector<Problem> one = {make_problem("p1")};
    SplitRatios bad;
    bad.eval_fraction = 0.0;
    try {
        assign_splits(one, bad);
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.code() == errc::config_error);
    }
    bad.eval_fraction = 1.0;
    CHECK_THROWS_AS(assign_splits(one, bad), Error);
    bad.eval_fraction = 0.5;
    bad.dev_fraction_of_train = 1.0;
    CHECK_THROWS_AS(assign_splits(one, bad), Error);
}

TEST_CASE("curation runs the filter, the judge and the admit rule in order") {
    TempDir dir;
    auto gw = scripted_gateway(dir);

    Problem p1 = make_problem("p1", "42", corpus::Source::Aime);
    Problem p2 = make_problem("p2");
    p2.statement += " [pure]";
    Problem p3 = make_problem("p3");
    p3.statement += " [pencil]";
    Problem p4 = make_problem("p4", "42", corpus::Source::OmniMath);
    p4.difficulty = 2.0;  // filtered before any judge call
    Problem p5 = make_problem("p5", "42", corpus::Source::OmniMath);
    p5.difficulty = 6.0;

    SplitRatios ratios;
    ratios.eval_fraction = 0.5;
    ratios.dev_fraction_of_train = 0.2;
    CurationOutcome out = curate({p1, p2, p3, p4, p5}, gw, "judge-1", 3.0, ratios);

    REQUIRE(out.verdicts.size() == 4);  // p4 never reached the judge
    std::set<std::string> judged;
    for (const auto& v : out.verdicts) judged.insert(v.problem_id);
    CHECK(judged == std::set<std::string>{"p1", "p2", "p3", "p5"});

    REQUIRE(out.admitted.size() == 2);
    CHECK(out.admitted[0].id == "p1");
    CHECK(out.admitted[1].id == "p5");
    for (const Problem& p : out.admitted) CHECK(p.split != Split::Unassigned);

    CHECK(out.manifest.totals.total == 5);
    CHECK(out.manifest.totals.admitted == 2);
    CHECK(out.manifest.by_source.at("AIME").admitted == 1);
    CHECK(out.manifest.by_source.at("Omni-Math").total == 2);
    CHECK(out.manifest.by_source.at("Omni-Math").admitted == 1);

    CHECK_THROWS_AS(curate({}, gw, "judge-1", 3.0, ratios), Error);
}
