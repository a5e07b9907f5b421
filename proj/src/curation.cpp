#include "timaudit/curation.hpp"

#include <algorithm>
#include <cmath>

#include "timaudit/errors.hpp"
#include "timaudit/metrics.hpp"
#include "timaudit/prompts.hpp"

namespace timaudit::curation {

using corpus::Problem;
using corpus::Split;

namespace {

constexpr const char* kOptions[] = {
    "Pure Python",
    "Python + LLM Insight/Reasoning",
    "Python for Verification",
    "Python for Exploration",
    "Minimal Python Role",
};

}  // namespace

std::string to_string(Recommendation r) {
    return kOptions[static_cast<int>(r)];
}

Recommendation recommendation_from_string(const std::string& s) {
    std::string needle = to_lower(trim(s));
    if (needle.empty()) {
        raise(errc::unparsable_verdict, "empty recommendation");
    }
    std::vector<Recommendation> hits;
    for (int i = 0; i < 5; ++i) {
        std::string option = to_lower(kOptions[i]);
        if (needle.rfind(option, 0) == 0 || option.rfind(needle, 0) == 0) {
            hits.push_back(static_cast<Recommendation>(i));
        }
    }
    if (hits.size() != 1) {
        raise(errc::unparsable_verdict,
              "recommendation \"" + s + "\" matches " + std::to_string(hits.size()) +
                  " options");
    }
    return hits.front();
}

json CurationVerdict::to_json() const {
    return json{{"problem_id", problem_id},
                {"python_usefulness", python_usefulness},
                {"python_sufficiency", python_sufficiency},
                {"recommendation", to_string(recommendation)},
                {"reasoning",
                 {{"mathematical_domain", reasoning.mathematical_domain},
                  {"solution_type", reasoning.solution_type},
                  {"computational_approach", reasoning.computational_approach},
                  {"problem_scale", reasoning.problem_scale},
                  {"verification_needs", reasoning.verification_needs},
                  {"techniques_required", reasoning.techniques_required}}}};
}

CurationVerdict CurationVerdict::from_json(const json& j) {
    CurationVerdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.python_usefulness = j.at("python_usefulness").get<bool>();
    v.python_sufficiency = j.at("python_sufficiency").get<bool>();
    v.recommendation =
        recommendation_from_string(j.at("recommendation").get<std::string>());
    if (j.contains("reasoning")) {
        const json& r = j["reasoning"];
        v.reasoning.mathematical_domain = r.value("mathematical_domain", "");
        v.reasoning.solution_type = r.value("solution_type", "");
        v.reasoning.computational_approach = r.value("computational_approach", "");
        v.reasoning.problem_scale = r.value("problem_scale", "");
        v.reasoning.verification_needs = r.value("verification_needs", "");
        v.reasoning.techniques_required = r.value("techniques_required", "");
    }
    return v;
}

bool filter_difficulty(const Problem& p, double min_difficulty) {
    if (!p.difficulty) return true;
    return *p.difficulty >= min_difficulty;
}

namespace {

CurationVerdict parse_curation_reply(const Problem& p, const std::string& raw) {
    auto maybe = metrics::extract_json_object(raw);
    if (!maybe) raise(errc::unparsable_verdict, "no JSON object in curation reply");
    const json& obj = *maybe;
    for (const char* key : {"python_usefulness", "python_sufficiency"}) {
        if (!obj.contains(key) || !obj[key].is_boolean()) {
            raise(errc::unparsable_verdict,
                  std::string("curation reply lacks boolean ") + key);
        }
    }
    if (!obj.contains("recommendation") || !obj["recommendation"].is_string()) {
        raise(errc::unparsable_verdict, "curation reply lacks recommendation");
    }
    CurationVerdict v;
    v.problem_id = p.id;
    v.python_usefulness = obj["python_usefulness"].get<bool>();
    v.python_sufficiency = obj["python_sufficiency"].get<bool>();
    v.recommendation =
        recommendation_from_string(obj["recommendation"].get<std::string>());
    if (obj.contains("reasoning") && obj["reasoning"].is_object()) {
        const json& r = obj["reasoning"];
        v.reasoning.mathematical_domain = r.value("mathematical_domain", "");
        v.reasoning.solution_type = r.value("solution_type", "");
        v.reasoning.computational_approach = r.value("computational_approach", "");
        v.reasoning.problem_scale = r.value("problem_scale", "");
        v.reasoning.verification_needs = r.value("verification_needs", "");
        v.reasoning.techniques_required = r.value("techniques_required", "");
    }
    return v;
}

}  // namespace

CurationVerdict classify_problem(const Problem& p, gateway::Gateway& judge,
                                 const std::string& judge_model) {
    auto req = prompts::make_request(gateway::TemplateId::Curation,
                                     {{"problem", p.statement}}, judge_model);
    gateway::JudgeResponse resp = judge.submit(req);
    if (resp.raw_text.empty()) {
        raise(errc::unparsable_verdict, "judge returned no samples");
    }
    try {
        return parse_curation_reply(p, resp.raw_text.front());
    } catch (const Error& e) {
        if (e.code() != errc::unparsable_verdict) throw;
    }
    // one repair round: same prompt plus an explicit format reminder
    gateway::JudgeRequest repair = req;
    repair.rendered_prompt +=
        "\n\nYour previous reply could not be parsed. Respond again with only "
        "the JSON object, exactly matching the schema above.";
    gateway::JudgeResponse second = judge.submit(repair);
    if (second.raw_text.empty()) {
        raise(errc::unparsable_verdict, "judge returned no samples on repair retry");
    }
    return parse_curation_reply(p, second.raw_text.front());
}

namespace {

std::string difficulty_band(const Problem& p) {
    if (!p.difficulty) return "unrated";
    double d = *p.difficulty;
    if (d < 6) return "5-6";
    if (d < 7) return "6-7";
    if (d < 8) return "7-8";
    return "8-10";
}

}  // namespace

std::map<std::string, Split> assign_splits(const std::vector<Problem>& admitted,
                                           const SplitRatios& ratios) {
    if (admitted.empty()) raise(errc::empty_corpus, "no admitted problems to split");
    if (ratios.eval_fraction <= 0 || ratios.eval_fraction >= 1 ||
        ratios.dev_fraction_of_train <= 0 || ratios.dev_fraction_of_train >= 1) {
        raise(errc::config_error, "split fractions must lie in (0,1)");
    }

    std::map<std::string, std::vector<std::string>> strata;
    for (const Problem& p : admitted) {
        strata[corpus::to_string(p.source) + "|" + difficulty_band(p)].push_back(p.id);
    }

    std::map<std::string, Split> out;
    for (auto& [key, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        DetRng rng(ratios.seed ^ fnv1a64(key));
        det_shuffle(ids, rng);

        auto n = static_cast<std::int64_t>(ids.size());
        auto n_eval = static_cast<std::int64_t>(
            std::llround(ratios.eval_fraction * static_cast<double>(n)));
        auto n_dev = static_cast<std::int64_t>(std::llround(
            ratios.dev_fraction_of_train * static_cast<double>(n - n_eval)));
        for (std::int64_t i = 0; i < n; ++i) {
            Split s = i < n_eval              ? Split::Eval
                      : i < n_eval + n_dev    ? Split::Dev
                                              : Split::Train;
            out[ids[static_cast<std::size_t>(i)]] = s;
        }
    }
    return out;
}

CurationOutcome curate(const std::vector<Problem>& raw, gateway::Gateway& judge,
                       const std::string& judge_model, double min_difficulty,
                       const SplitRatios& ratios) {
    if (raw.empty()) raise(errc::empty_corpus, "curation over an empty corpus");

    CurationOutcome outcome;
    for (const Problem& p : raw) {
        if (!filter_difficulty(p, min_difficulty)) continue;
        CurationVerdict v = classify_problem(p, judge, judge_model);
        outcome.verdicts.push_back(v);
        if (admit(v)) outcome.admitted.push_back(p);
    }
    if (!outcome.admitted.empty()) {
        auto splits = assign_splits(outcome.admitted, ratios);
        for (Problem& p : outcome.admitted) p.split = splits.at(p.id);
    }
    outcome.manifest = corpus::build_manifest(raw, outcome.admitted);
    return outcome;
}

std::vector<CurationVerdict> read_curation_verdicts(const fs::path& path) {
    std::vector<CurationVerdict> out;
    for (const json& j : read_jsonl(path)) out.push_back(CurationVerdict::from_json(j));
    return out;
}

void write_curation_verdicts(const fs::path& path,
                             const std::vector<CurationVerdict>& v) {
    std::vector<json> lines;
    lines.reserve(v.size());
    for (const auto& r : v) lines.push_back(r.to_json());
    write_jsonl(path, lines);
}

}  // namespace timaudit::curation
