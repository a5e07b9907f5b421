#pragma once

// Shared plumbing for the test suites: fixture paths, throwaway directories,
// tiny corpus builders and a deterministic scripted provider. The transport
// answers every judge template from markers embedded in the prompt text, so
// identical requests always get identical responses and record/replay runs
// are reproducible by construction.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "timaudit/corpus.hpp"
#include "timaudit/gateway.hpp"
#include "timaudit/util.hpp"

namespace timaudit::test {

inline fs::path fixture_path(const std::string& name) {
    return fs::path(TIMAUDIT_FIXTURE_DIR) / name;
}

struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<std::uint64_t> counter{0};
        path = fs::temp_directory_path() /
               ("timaudit-test-" + std::to_string(counter.fetch_add(1)) + "-" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// ---- corpus builders -------------------------------------------------------

inline corpus::Problem make_problem(const std::string& id,
                                    const std::string& gold = "42",
                                    corpus::Source source = corpus::Source::Other) {
    corpus::Problem p;
    p.id = id;
    p.source = source;
    p.statement = "Problem " + id + ": determine the required quantity.";
    p.gold_answer = gold;
    p.gold_solution = "Observe. Reduce. Evaluate. Conclude.";
    return p;
}

inline corpus::Segment seg_text(const std::string& body) {
    return corpus::Segment{0, corpus::SegmentKind::Text, body};
}
inline corpus::Segment seg_code(const std::string& body) {
    return corpus::Segment{0, corpus::SegmentKind::Code, body};
}
inline corpus::Segment seg_output(const std::string& body) {
    return corpus::Segment{0, corpus::SegmentKind::Output, body};
}

inline corpus::Transcript make_transcript(const std::string& pid,
                                          const std::string& mid,
                                          corpus::Variant variant,
                                          std::vector<corpus::Segment> segments,
                                          const std::string& final_answer) {
    corpus::Transcript t;
    t.problem_id = pid;
    t.model_id = mid;
    t.variant = variant;
    t.segments = std::move(segments);
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
        t.segments[i].ordinal = static_cast<int>(i);
    }
    t.final_answer = final_answer;
    return t;
}

// ---- scripted provider -------------------------------------------------------

inline int count_occurrences(const std::string& text, const std::string& needle) {
    int n = 0;
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

inline std::string slice_between(const std::string& text, const std::string& after,
                                 const std::string& before) {
    std::size_t s = text.find(after);
    if (s == std::string::npos) return "";
    s += after.size();
    std::size_t e = before.empty() ? text.size() : text.find(before, s);
    if (e == std::string::npos) e = text.size();
    return text.substr(s, e - s);
}

// Marker language understood by the scripted judge; documented alongside the
// fixture generator (tests/fixtures/gen/gen_e2e_fixture.py).
class ScriptedTransport : public gateway::Transport {
  public:
    std::atomic<int> chat_calls{0};
    std::atomic<int> prm_calls{0};
    int chat_delay_ms = 0;

    gateway::JudgeResponse call_chat(const gateway::JudgeRequest& req) override {
        chat_calls.fetch_add(1);
        if (chat_delay_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(chat_delay_ms));
        }
        gateway::JudgeResponse resp;
        resp.latency_ms = 0;
        const std::string& p = req.rendered_prompt;
        switch (req.template_id) {
            case gateway::TemplateId::FinalAnswer: {
                std::string answer =
                    slice_between(p, "Submitted final answer:\n", "\n\nReference answer:");
                std::string gold =
                    slice_between(p, "Reference answer:\n", "\n\nRespond strictly");
                bool eq = trim(answer) == trim(gold);
                resp.raw_text.push_back(std::string("Checked. {\"equivalent\": ") +
                                        (eq ? "true" : "false") + "}");
                break;
            }
            case gateway::TemplateId::WinRate: {
                std::string a = slice_between(p, "Solution A:\n", "\n\nSolution B:");
                std::string b = slice_between(p, "Solution B:\n", "\n\nRespond strictly");
                int sa = std::min(5, count_occurrences(a, "the computation suggests"));
                int sb = std::min(5, count_occurrences(b, "the computation suggests"));
                resp.raw_text.push_back(pair_reply(sa, sb));
                break;
            }
            case gateway::TemplateId::MissRate: {
                std::string sol = slice_between(p, "Solution:\n", "\n\nGold solution:");
                resp.raw_text.push_back(miss_reply(miss_marker(sol)));
                break;
            }
            case gateway::TemplateId::ErrorProfile: {
                std::string sol = slice_between(p, "Solution:\n", "\n\nOutput format");
                resp.raw_text.push_back(profile_reply(sol));
                break;
            }
            case gateway::TemplateId::Curation: {
                std::string stmt = slice_between(p, "Problem:\n", "\n\nRespond strictly");
                resp.raw_text.push_back(curation_reply(stmt));
                break;
            }
            case gateway::TemplateId::Degradation: {
                std::string span = slice_between(p, "Target text span:\n", "");
                while (!span.empty() && span.back() == '\n') span.pop_back();
                resp.raw_text.push_back("By computation, the claim follows.");
                if (req.params.n_samples > 1) {
                    if (span.find("[stubborn]") != std::string::npos) {
                        resp.raw_text.push_back(
                            "Numerically, the evidence is overwhelming.");
                    } else {
                        resp.raw_text.push_back("The computation suggests " + span);
                    }
                }
                break;
            }
        }
        return resp;
    }

    std::vector<double> call_prm(const gateway::PrmRequest& req) override {
        prm_calls.fetch_add(1);
        std::vector<double> scores;
        scores.reserve(req.steps.size());
        for (const std::string& step : req.steps) {
            scores.push_back(step.find("sloppy") != std::string::npos ? 0.3 : 0.9);
        }
        return scores;
    }

  private:
    static int miss_marker(const std::string& text) {
        std::size_t pos = text.find("[miss:");
        if (pos == std::string::npos) return 0;
        char c = text[pos + 6];
        return (c >= '0' && c <= '9') ? c - '0' : 0;
    }

    static std::string grades(int score) {
        std::string s = std::to_string(score);
        std::string cat = "{\"score\": " + s + ", \"explanation\": \"scripted\"}";
        return "{\"logic\": " + cat + ", \"assumption\": " + cat +
               ", \"creativity\": " + cat + ", \"algebra_arithmetic\": " + cat +
               ", \"final_score\": {\"score\": " + s + "}}";
    }

    static std::string pair_reply(int sa, int sb) {
        const char* best = sa <= sb ? "A" : "B";
        return "{\"A_grades\": " + grades(sa) + ", \"B_grades\": " + grades(sb) +
               ", \"best_solution\": \"" + best + "\"}";
    }

    static std::string miss_reply(int k) {
        auto steps = [](int from, int to) {
            std::string out = "[";
            for (int i = from; i <= to; ++i) {
                if (i > from) out += ", ";
                out += "{\"step\": " + std::to_string(i) +
                       ", \"summary\": \"gold step " + std::to_string(i) + "\"}";
            }
            return out + "]";
        };
        std::string missing = k > 0 ? steps(1, k) : "[]";
        return "{\"gold_steps\": " + steps(1, 4) + ", \"missing_steps\": " + missing + "}";
    }

    static std::string profile_reply(const std::string& sol) {
        std::string marked = slice_between(sol, "[err:", "]");
        auto has = [&](const char* cat) {
            return marked.find(cat) != std::string::npos;
        };
        bool any = false;
        std::string out = "{";
        for (const char* cat :
             {"logic", "assumption", "creativity", "algebra_arithmetic"}) {
            bool yes = has(cat);
            any = any || yes;
            out += std::string("\"") + cat + "\": {\"exists\": \"" +
                   (yes ? "yes" : "no") + "\", \"explanation\": \"scripted\"}, ";
        }
        out += std::string("\"none_of_the_above\": {\"exists\": \"") +
               (any ? "no" : "yes") + "\", \"explanation\": \"scripted\"}}";
        return out;
    }

    static std::string curation_reply(const std::string& stmt) {
        bool useful = stmt.find("[pencil]") == std::string::npos;
        bool sufficient = stmt.find("[pure]") != std::string::npos;
        // lowercase prefix on purpose: parsing must be case-insensitive
        std::string rec = stmt.find("[explore]") != std::string::npos
                              ? "Python for Exploration"
                              : "python + llm insight";
        return std::string("{\"problem\": \"restated\", \"reasoning\": {") +
               "\"mathematical_domain\": \"synthetic\", \"solution_type\": \"value\", " +
               "\"computational_approach\": \"direct\", \"problem_scale\": \"small\", " +
               "\"verification_needs\": \"light\", \"techniques_required\": \"none\"}, " +
               "\"python_usefulness\": " + (useful ? "true" : "false") +
               ", \"python_sufficiency\": " + (sufficient ? "true" : "false") +
               ", \"recommendation\": \"" + rec + "\"}";
    }
};

}  // namespace timaudit::test
