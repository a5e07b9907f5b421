#include "timaudit/triage.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "timaudit/errors.hpp"

namespace timaudit::triage {

using corpus::Variant;

json RiskRecord::to_json() const {
    json matches = json::array();
    for (const auto& m : precursor_matches) matches.push_back(m.to_json());
    return json{{"problem_id", problem_id},
                {"model_id", model_id},
                {"final_correct", final_correct},
                {"base_won", base_won},
                {"prm_flagged", prm_flagged},
                {"miss_rate", {{"num", miss_rate_value.num}, {"den", miss_rate_value.den}}},
                {"precursor_matches", matches}};
}

RiskRecord RiskRecord::from_json(const json& j) {
    RiskRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.final_correct = j.at("final_correct").get<bool>();
    r.base_won = j.at("base_won").get<bool>();
    r.prm_flagged = j.at("prm_flagged").get<bool>();
    r.miss_rate_value = Rat::of(j.at("miss_rate").at("num").get<std::int64_t>(),
                                j.at("miss_rate").at("den").get<std::int64_t>());
    for (const json& m : j.at("precursor_matches")) {
        r.precursor_matches.push_back(code_analysis::PrecursorMatch::from_json(m));
    }
    return r;
}

bool flag_high_risk(const metrics::FinalVerdict& final_talm,
                    const metrics::PairVerdict& pair,
                    const metrics::PrmVerdict& prm_talm) {
    if (final_talm.problem_id != pair.problem_id ||
        final_talm.problem_id != prm_talm.problem_id ||
        final_talm.model_id != pair.model_id ||
        final_talm.model_id != prm_talm.model_id) {
        raise(errc::precondition, "high-risk filter over mismatched verdicts");
    }
    return final_talm.correct &&
           pair.winning_variant() == Variant::Base &&
           !prm_talm.solution_correct;
}

std::vector<RiskRecord> build_risk_records(
    const stats::VerdictStore& store,
    const std::vector<code_analysis::PrecursorRecord>& precursors) {
    using Key = std::pair<std::string, std::string>;  // problem, model
    std::map<Key, const metrics::PairVerdict*> pair_idx;
    for (const auto& v : store.pairs) {
        bool base_vs_talm = (v.side_a == Variant::Base && v.side_b == Variant::TaLM) ||
                            (v.side_a == Variant::TaLM && v.side_b == Variant::Base);
        if (base_vs_talm) pair_idx[{v.problem_id, v.model_id}] = &v;
    }
    std::map<Key, const metrics::PrmVerdict*> prm_idx;
    for (const auto& v : store.prms) {
        if (v.variant == Variant::TaLM) prm_idx[{v.problem_id, v.model_id}] = &v;
    }
    std::map<Key, const metrics::MissVerdict*> miss_idx;
    for (const auto& v : store.misses) {
        if (v.variant == Variant::TaLM) miss_idx[{v.problem_id, v.model_id}] = &v;
    }
    std::map<Key, const code_analysis::PrecursorRecord*> precursor_idx;
    for (const auto& p : precursors) {
        if (p.variant == Variant::TaLM) precursor_idx[{p.problem_id, p.model_id}] = &p;
    }

    std::vector<RiskRecord> out;
    for (const auto& f : store.finals) {
        if (f.variant != Variant::TaLM || !f.correct) continue;
        Key key{f.problem_id, f.model_id};
        auto require = [&](auto& idx, const char* kind) -> decltype(idx.begin()->second) {
            auto it = idx.find(key);
            if (it == idx.end()) {
                raise(errc::missing_verdict,
                      "correct TaLM solution " + f.problem_id + "/" + f.model_id +
                          " lacks a " + kind);
            }
            return it->second;
        };
        const auto* pair = require(pair_idx, "Base-vs-TaLM pair verdict");
        const auto* prm = require(prm_idx, "PRM verdict");
        const auto* miss = require(miss_idx, "miss verdict");

        RiskRecord r;
        r.problem_id = f.problem_id;
        r.model_id = f.model_id;
        r.final_correct = f.correct;
        r.base_won = pair->winning_variant() == Variant::Base;
        r.prm_flagged = !prm->solution_correct;
        r.miss_rate_value = metrics::miss_rate(*miss);
        if (auto it = precursor_idx.find(key); it != precursor_idx.end()) {
            r.precursor_matches = it->second->matches;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RiskRecord> top_k_by_miss_rate(std::vector<RiskRecord> records,
                                           std::size_t k) {
    std::sort(records.begin(), records.end(),
              [](const RiskRecord& a, const RiskRecord& b) {
                  if (a.miss_rate_value == b.miss_rate_value) {
                      return a.problem_id < b.problem_id;
                  }
                  return b.miss_rate_value < a.miss_rate_value;
              });
    if (records.size() > k) records.resize(k);
    return records;
}

// ---- audit bundles --------------------------------------------------------------

std::string to_string(TimPresent t) {
    switch (t) {
        case TimPresent::Unmarked: return "unmarked";
        case TimPresent::Yes: return "yes";
        case TimPresent::No: return "no";
    }
    return "unmarked";
}

TimPresent tim_present_from_string(const std::string& s) {
    std::string v = to_lower(trim(s));
    if (v == "unmarked" || v.empty()) return TimPresent::Unmarked;
    if (v == "yes") return TimPresent::Yes;
    if (v == "no") return TimPresent::No;
    raise(errc::malformed_record, "tim_present must be yes, no, or unmarked: " + s);
}

void write_bundle(const fs::path& path, const TriageBundle& bundle) {
    ordered_json doc;
    doc["model_id"] = bundle.model_id;
    doc["record_count"] = bundle.records.size();
    ordered_json records = ordered_json::array();
    for (const auto& rec : bundle.records) {
        ordered_json r;
        r["problem_id"] = rec.risk.problem_id;
        r["final_correct"] = rec.risk.final_correct;
        r["base_won"] = rec.risk.base_won;
        r["prm_flagged"] = rec.risk.prm_flagged;
        r["miss_rate"] = ordered_json{{"num", rec.risk.miss_rate_value.num},
                                      {"den", rec.risk.miss_rate_value.den}};
        ordered_json matches = ordered_json::array();
        for (const auto& m : rec.risk.precursor_matches) {
            matches.push_back(ordered_json(m.to_json()));
        }
        r["precursor_matches"] = matches;
        r["transcript"] = ordered_json(rec.transcript.to_json());
        r["annotation"] = ordered_json{
            {"tim_present", to_string(rec.annotation.tim_present)},
            {"precursor_phrases", rec.annotation.precursor_phrases}};
        records.push_back(std::move(r));
    }
    doc["records"] = std::move(records);
    write_file_atomic(path, doc.dump(2) + "\n");
}

TriageBundle read_bundle(const fs::path& path) {
    json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) {
        raise(errc::malformed_record, "bundle is not valid JSON: " + path.string());
    }
    TriageBundle bundle;
    bundle.model_id = doc.at("model_id").get<std::string>();
    for (const json& r : doc.at("records")) {
        BundleRecord rec;
        rec.risk.problem_id = r.at("problem_id").get<std::string>();
        rec.risk.model_id = bundle.model_id;
        rec.risk.final_correct = r.at("final_correct").get<bool>();
        rec.risk.base_won = r.at("base_won").get<bool>();
        rec.risk.prm_flagged = r.at("prm_flagged").get<bool>();
        rec.risk.miss_rate_value =
            Rat::of(r.at("miss_rate").at("num").get<std::int64_t>(),
                    r.at("miss_rate").at("den").get<std::int64_t>());
        for (const json& m : r.at("precursor_matches")) {
            rec.risk.precursor_matches.push_back(
                code_analysis::PrecursorMatch::from_json(m));
        }
        rec.transcript = corpus::Transcript::from_json(r.at("transcript"));
        rec.annotation.tim_present =
            tim_present_from_string(r.at("annotation").at("tim_present").get<std::string>());
        rec.annotation.precursor_phrases =
            r.at("annotation").value("precursor_phrases", "");
        bundle.records.push_back(std::move(rec));
    }
    return bundle;
}

TriageSummary summarize(const std::vector<TriageBundle>& bundles) {
    TriageSummary s;
    for (const auto& b : bundles) {
        for (const auto& rec : b.records) {
            switch (rec.annotation.tim_present) {
                case TimPresent::Yes: ++s.yes; break;
                case TimPresent::No: ++s.no; break;
                case TimPresent::Unmarked: ++s.unmarked; break;
            }
        }
    }
    if (s.yes + s.no > 0) s.prevalence = Rat::of(s.yes, s.yes + s.no);
    return s;
}

}  // namespace timaudit::triage
