#include "timaudit/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>
#include <utility>

#include "timaudit/code_analysis.hpp"
#include "timaudit/corpus.hpp"
#include "timaudit/curation.hpp"
#include "timaudit/errors.hpp"
#include "timaudit/forge.hpp"
#include "timaudit/metrics.hpp"
#include "timaudit/numeric.hpp"
#include "timaudit/stats.hpp"
#include "timaudit/triage.hpp"

namespace timaudit::pipeline {

namespace {

// fuzzy-match cutoff for precursor-phrase detection, same bar as the
// lexicon's own clustering
constexpr double kPrecursorThreshold = 0.8;

// Holds <run_dir>/.lock for the lifetime of one orchestrator. The file's
// existence is the lock; its content (a pid) is a courtesy for whoever has
// to clean up after a crash.
class RunLock {
  public:
    explicit RunLock(fs::path path) : path_(std::move(path)) {
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST) {
                raise(errc::precondition,
                      "run directory is locked (" + path_.string() +
                          " exists); remove it if no other orchestrator is active");
            }
            raise(errc::io_failure, "cannot create " + path_.string() + ": " +
                                        std::string(std::strerror(errno)));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] ssize_t n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

  private:
    fs::path path_;
};

// Runs fn(0..n-1) on up to `parallelism` workers. The first exception stops
// further task pickup and is rethrown after all workers drain.
void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(parallelism, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                if (failed.load()) return;
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string model_slug(const std::string& model_id) {
    std::string s;
    for (char c : model_id) {
        unsigned char u = static_cast<unsigned char>(c);
        s += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '-';
    }
    return s;
}

std::vector<std::string> list_relative(const fs::path& root, const std::string& subdir) {
    std::vector<std::string> out;
    const fs::path dir = root / subdir;
    if (!fs::is_directory(dir)) return out;
    for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        out.push_back(subdir + "/" + entry.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

json rat_json(const Rat& r) { return json{{"num", r.num}, {"den", r.den}}; }

json opt_rat_json(const std::optional<Rat>& r) {
    return r ? rat_json(*r) : json(nullptr);
}

json opt_cell_json(const std::optional<std::int64_t>& v) {
    return v ? json(*v) : json(nullptr);
}

// ---- shared stage inputs ---------------------------------------------------------

// The problem set metrics run over. A curated corpus in the run directory
// takes precedence and restricts evaluation to its eval split; otherwise
// the corpus file is taken as the evaluation set as given.
std::vector<corpus::Problem> evaluation_problems(const RunConfig& cfg) {
    const fs::path curated = cfg.output_dir / "curated_problems.jsonl";
    if (fs::is_regular_file(curated)) {
        std::vector<corpus::Problem> admitted = corpus::read_problems(curated);
        std::vector<corpus::Problem> eval;
        for (corpus::Problem& p : admitted) {
            if (p.split == corpus::Split::Eval) eval.push_back(std::move(p));
        }
        return eval;
    }
    return corpus::read_problems(cfg.corpus);
}

std::map<std::string, corpus::Problem> problem_index(
    std::vector<corpus::Problem> problems) {
    std::map<std::string, corpus::Problem> idx;
    for (corpus::Problem& p : problems) {
        std::string id = p.id;
        if (!idx.emplace(id, std::move(p)).second) {
            raise(errc::malformed_record, "duplicate problem id " + id);
        }
    }
    return idx;
}

// Transcripts restricted to the evaluation problems, in (problem, model,
// variant) order. A transcript whose problem is outside the set (filtered
// out by curation, or foreign to the corpus) is silently dropped.
std::vector<corpus::Transcript> evaluation_transcripts(
    const RunConfig& cfg, const std::map<std::string, corpus::Problem>& problems) {
    std::vector<corpus::Transcript> all = corpus::read_transcripts(cfg.transcripts);
    std::vector<corpus::Transcript> kept;
    for (corpus::Transcript& t : all) {
        if (problems.count(t.problem_id)) kept.push_back(std::move(t));
    }
    auto key = [](const corpus::Transcript& t) {
        return std::make_tuple(t.problem_id, t.model_id, static_cast<int>(t.variant));
    };
    std::sort(kept.begin(), kept.end(),
              [&](const corpus::Transcript& a, const corpus::Transcript& b) {
                  return key(a) < key(b);
              });
    for (std::size_t i = 1; i < kept.size(); ++i) {
        if (key(kept[i - 1]) == key(kept[i])) {
            raise(errc::malformed_record,
                  "duplicate transcript for problem " + kept[i].problem_id + ", model " +
                      kept[i].model_id + ", variant " + corpus::to_string(kept[i].variant));
        }
    }
    return kept;
}

// ---- stages ---------------------------------------------------------------------

std::vector<std::string> stage_curate(const RunConfig& cfg, gateway::Gateway& gw) {
    std::vector<corpus::Problem> raw = corpus::read_problems(cfg.corpus);
    curation::SplitRatios ratios{cfg.eval_fraction, cfg.dev_fraction, cfg.seed};
    curation::CurationOutcome out =
        curation::curate(raw, gw, cfg.judge_model, cfg.min_difficulty, ratios);
    curation::write_curation_verdicts(cfg.output_dir / "curation_verdicts.jsonl",
                                      out.verdicts);
    corpus::write_problems(cfg.output_dir / "curated_problems.jsonl", out.admitted);
    // stage marker, written last
    write_file_atomic(cfg.output_dir / "corpus_manifest.json",
                      out.manifest.to_json().dump(2) + "\n");
    return {"curation_verdicts.jsonl", "curated_problems.jsonl", "corpus_manifest.json"};
}

std::vector<std::string> stage_evaluate(const RunConfig& cfg, gateway::Gateway& gw) {
    const fs::path vdir = cfg.output_dir / "verdicts";
    fs::create_directories(vdir);
    const std::map<std::string, corpus::Problem> problems =
        problem_index(evaluation_problems(cfg));
    const std::vector<corpus::Transcript> ts = evaluation_transcripts(cfg, problems);

    std::vector<metrics::FinalVerdict> finals(ts.size());
    parallel_for(ts.size(), cfg.parallelism, [&](std::size_t i) {
        finals[i] = metrics::judge_final_answer(problems.at(ts[i].problem_id), ts[i], gw,
                                                cfg.judge_model);
    });

    std::set<std::tuple<std::string, std::string, int>> correct;
    for (const metrics::FinalVerdict& v : finals) {
        if (v.correct) correct.insert({v.problem_id, v.model_id, static_cast<int>(v.variant)});
    }
    auto is_correct = [&](const corpus::Transcript& t) {
        return correct.count({t.problem_id, t.model_id, static_cast<int>(t.variant)}) > 0;
    };

    std::map<std::pair<std::string, std::string>, std::map<int, const corpus::Transcript*>>
        by_pm;
    for (const corpus::Transcript& t : ts) {
        by_pm[{t.problem_id, t.model_id}][static_cast<int>(t.variant)] = &t;
    }

    // pairwise: Base against each tool variant, gated on both finals correct
    struct PairTask {
        const corpus::Transcript* base;
        const corpus::Transcript* tool;
    };
    std::vector<PairTask> pair_tasks;
    for (const auto& [pm, variants] : by_pm) {
        auto base_it = variants.find(static_cast<int>(corpus::Variant::Base));
        if (base_it == variants.end() || !is_correct(*base_it->second)) continue;
        for (const auto& [vi, tp] : variants) {
            if (vi == static_cast<int>(corpus::Variant::Base) || !is_correct(*tp)) continue;
            pair_tasks.push_back({base_it->second, tp});
        }
    }
    std::vector<metrics::PairVerdict> pairs(pair_tasks.size());
    parallel_for(pair_tasks.size(), cfg.parallelism, [&](std::size_t i) {
        const PairTask& task = pair_tasks[i];
        pairs[i] = metrics::judge_pairwise(problems.at(task.base->problem_id), *task.base,
                                           *task.tool, gw, cfg.judge_model, cfg.seed);
    });

    // step audits for every final-correct transcript
    std::vector<const corpus::Transcript*> correct_ts;
    for (const corpus::Transcript& t : ts) {
        if (is_correct(t)) correct_ts.push_back(&t);
    }
    std::vector<metrics::MissVerdict> misses(correct_ts.size());
    parallel_for(correct_ts.size(), cfg.parallelism, [&](std::size_t i) {
        misses[i] = metrics::judge_missing_steps(problems.at(correct_ts[i]->problem_id),
                                                 *correct_ts[i], gw, cfg.judge_model);
    });
    std::vector<metrics::PrmVerdict> prms(correct_ts.size());
    parallel_for(correct_ts.size(), cfg.parallelism, [&](std::size_t i) {
        prms[i] = metrics::score_with_prm(problems.at(correct_ts[i]->problem_id),
                                          *correct_ts[i], gw, cfg.prm_model,
                                          cfg.prm_threshold);
    });

    // error profiles where Base and TaLM are both correct, Base side first
    std::vector<const corpus::Transcript*> profile_ts;
    for (const auto& [pm, variants] : by_pm) {
        auto b = variants.find(static_cast<int>(corpus::Variant::Base));
        auto m = variants.find(static_cast<int>(corpus::Variant::TaLM));
        if (b == variants.end() || m == variants.end()) continue;
        if (!is_correct(*b->second) || !is_correct(*m->second)) continue;
        profile_ts.push_back(b->second);
        profile_ts.push_back(m->second);
    }
    std::vector<metrics::ErrorProfile> profiles(profile_ts.size());
    std::vector<std::vector<std::string>> profile_warnings(profile_ts.size());
    parallel_for(profile_ts.size(), cfg.parallelism, [&](std::size_t i) {
        profiles[i] =
            metrics::judge_error_profile(problems.at(profile_ts[i]->problem_id),
                                         *profile_ts[i], gw, cfg.judge_model,
                                         &profile_warnings[i]);
    });

    metrics::write_final_verdicts(vdir / "finals.jsonl", finals);
    metrics::write_pair_verdicts(vdir / "pairs.jsonl", pairs);
    metrics::write_miss_verdicts(vdir / "misses.jsonl", misses);
    metrics::write_prm_verdicts(vdir / "prms.jsonl", prms);
    std::string warn_text;
    for (const std::vector<std::string>& ws : profile_warnings) {
        for (const std::string& w : ws) warn_text += w + "\n";
    }
    write_file_atomic(vdir / "warnings.txt", warn_text);
    // stage marker, written last
    metrics::write_error_profiles(vdir / "profiles.jsonl", profiles);
    return {"verdicts/finals.jsonl", "verdicts/pairs.jsonl", "verdicts/misses.jsonl",
            "verdicts/prms.jsonl", "verdicts/warnings.txt", "verdicts/profiles.jsonl"};
}

std::vector<std::string> stage_analyze(const RunConfig& cfg) {
    const fs::path adir = cfg.output_dir / "analysis";
    fs::create_directories(adir);
    const std::map<std::string, corpus::Problem> problems =
        problem_index(evaluation_problems(cfg));
    const std::vector<corpus::Transcript> ts = evaluation_transcripts(cfg, problems);
    const code_analysis::PrecursorLexicon lexicon = code_analysis::default_lexicon();

    std::vector<json> profile_rows;
    std::vector<json> precursor_rows;
    for (const corpus::Transcript& t : ts) {
        code_analysis::ComplexityProfile p = code_analysis::profile_transcript(t);
        const bool uses_tool = p.tool_calls > 0;
        profile_rows.push_back(p.to_json());
        if (!uses_tool) continue;
        code_analysis::PrecursorRecord rec;
        rec.problem_id = t.problem_id;
        rec.model_id = t.model_id;
        rec.variant = t.variant;
        rec.matches = code_analysis::detect_precursors(t, lexicon, kPrecursorThreshold);
        precursor_rows.push_back(rec.to_json());
    }
    write_jsonl(adir / "complexity_profiles.jsonl", profile_rows);
    // stage marker, written last
    write_jsonl(adir / "precursors.jsonl", precursor_rows);
    return {"analysis/complexity_profiles.jsonl", "analysis/precursors.jsonl"};
}

std::vector<std::string> stage_stats(const RunConfig& cfg) {
    const fs::path vdir = cfg.output_dir / "verdicts";
    const fs::path sdir = cfg.output_dir / "stats";
    fs::create_directories(sdir);
    std::vector<metrics::FinalVerdict> finals =
        metrics::read_final_verdicts(vdir / "finals.jsonl");
    std::vector<metrics::PairVerdict> pairs =
        metrics::read_pair_verdicts(vdir / "pairs.jsonl");
    std::vector<metrics::MissVerdict> misses =
        metrics::read_miss_verdicts(vdir / "misses.jsonl");
    std::vector<metrics::PrmVerdict> prms = metrics::read_prm_verdicts(vdir / "prms.jsonl");
    std::vector<metrics::ErrorProfile> profiles =
        metrics::read_error_profiles(vdir / "profiles.jsonl");
    metrics::validate_gate_discipline(finals, pairs, misses, prms, profiles);

    std::vector<code_analysis::ComplexityProfile> complexity;
    for (const json& row :
         read_jsonl(cfg.output_dir / "analysis" / "complexity_profiles.jsonl")) {
        complexity.push_back(code_analysis::ComplexityProfile::from_json(row));
    }

    stats::VerdictStore store{finals, pairs, misses, prms, profiles};
    const stats::MetricsTable table = stats::aggregate_table(store);
    auto row_json = [](const stats::TableRow& r) {
        ordered_json j;
        j["model_id"] = r.model_id;
        j["variant"] = corpus::display_name(r.variant);
        j["final_acc"] = opt_cell_json(r.final_acc);
        j["miss_rate"] = opt_cell_json(r.miss_rate);
        j["win_rate"] = opt_cell_json(r.win_rate);
        j["prm_acc"] = opt_cell_json(r.prm_acc);
        return j;
    };
    ordered_json table_j;
    table_j["rows"] = ordered_json::array();
    for (const stats::TableRow& r : table.rows) table_j["rows"].push_back(row_json(r));
    table_j["averages"] = ordered_json::array();
    for (const stats::TableRow& r : table.averages)
        table_j["averages"].push_back(row_json(r));
    write_file_atomic(sdir / "metrics_table.json", table_j.dump(2) + "\n");

    ordered_json bins_j = ordered_json::array();
    for (const stats::BinRow& b : stats::binned_metrics(pairs, misses, prms, complexity)) {
        ordered_json j;
        j["model_id"] = b.model_id;
        j["bin"] = b.bin;
        j["pair_count"] = b.pair_count;
        j["win_rate"] = opt_rat_json(b.win_rate);
        j["miss_count"] = b.miss_count;
        j["mean_miss_rate"] = opt_rat_json(b.mean_miss_rate);
        j["prm_count"] = b.prm_count;
        j["prm_accuracy"] = opt_rat_json(b.prm_accuracy);
        bins_j.push_back(std::move(j));
    }
    write_file_atomic(sdir / "bins.json", bins_j.dump(2) + "\n");

    ordered_json corr_j = ordered_json::array();
    for (const stats::CorrelationOutcome& c :
         stats::correlate_complexity(complexity, misses)) {
        ordered_json j;
        j["model_id"] = c.model_id;
        j["metric"] = c.metric;
        if (c.result) {
            ordered_json res;
            res["x_label"] = c.result->x_label;
            res["y_label"] = c.result->y_label;
            res["r"] = c.result->r;
            res["n"] = c.result->n;
            res["p_value"] = c.result->p_value;
            res["significance"] = stats::to_string(c.result->significance);
            j["result"] = std::move(res);
        } else {
            j["result"] = nullptr;
        }
        j["failure"] = c.failure;
        ordered_json points = ordered_json::array();
        for (const auto& [x, y] : c.points) points.push_back(ordered_json{x, y});
        j["points"] = std::move(points);
        corr_j.push_back(std::move(j));
    }
    write_file_atomic(sdir / "correlations.json", corr_j.dump(2) + "\n");

    // deltas over the ids profiled on both sides
    std::vector<metrics::ErrorProfile> base_profiles;
    std::vector<metrics::ErrorProfile> talm_profiles;
    for (const metrics::ErrorProfile& p : profiles) {
        if (p.variant == corpus::Variant::Base) base_profiles.push_back(p);
        if (p.variant == corpus::Variant::TaLM) talm_profiles.push_back(p);
    }
    std::map<std::string, std::set<std::string>> both_correct;
    {
        std::set<std::pair<std::string, std::string>> base_ids;
        for (const metrics::ErrorProfile& p : base_profiles) {
            base_ids.insert({p.model_id, p.problem_id});
        }
        for (const metrics::ErrorProfile& p : talm_profiles) {
            if (base_ids.count({p.model_id, p.problem_id})) {
                both_correct[p.model_id].insert(p.problem_id);
            }
        }
    }
    ordered_json deltas_j = ordered_json::array();
    for (const stats::ErrorDelta& d :
         stats::error_deltas(base_profiles, talm_profiles, both_correct)) {
        ordered_json j;
        j["model_id"] = d.model_id;
        j["n"] = d.n;
        j["logic"] = rat_json(d.logic);
        j["assumption"] = rat_json(d.assumption);
        j["creativity"] = rat_json(d.creativity);
        j["algebra_arithmetic"] = rat_json(d.algebra_arithmetic);
        j["none_of_the_above"] = rat_json(d.none_of_the_above);
        deltas_j.push_back(std::move(j));
    }
    write_file_atomic(sdir / "error_deltas.json", deltas_j.dump(2) + "\n");

    // share of problems where the tool variant actually called the tool
    struct Inv {
        std::int64_t problems = 0;
        std::int64_t with_tool = 0;
    };
    std::map<std::string, Inv> inv;
    for (const code_analysis::ComplexityProfile& p : complexity) {
        if (p.variant != corpus::Variant::TaLM) continue;
        Inv& row = inv[p.model_id];
        ++row.problems;
        if (p.tool_calls >= 1) ++row.with_tool;
    }
    ordered_json inv_j = ordered_json::array();
    for (const auto& [model, row] : inv) {
        ordered_json j;
        j["model_id"] = model;
        j["problems"] = row.problems;
        j["with_tool"] = row.with_tool;
        j["rate_tenths"] = pct_tenths(row.with_tool, row.problems);
        inv_j.push_back(std::move(j));
    }
    // stage marker, written last
    write_file_atomic(sdir / "invocation_rates.json", inv_j.dump(2) + "\n");
    return {"stats/metrics_table.json", "stats/bins.json", "stats/correlations.json",
            "stats/error_deltas.json", "stats/invocation_rates.json"};
}

std::vector<std::string> stage_triage(const RunConfig& cfg) {
    const fs::path vdir = cfg.output_dir / "verdicts";
    const fs::path tdir = cfg.output_dir / "triage";
    fs::create_directories(tdir);
    stats::VerdictStore store;
    store.finals = metrics::read_final_verdicts(vdir / "finals.jsonl");
    store.pairs = metrics::read_pair_verdicts(vdir / "pairs.jsonl");
    store.misses = metrics::read_miss_verdicts(vdir / "misses.jsonl");
    store.prms = metrics::read_prm_verdicts(vdir / "prms.jsonl");

    // Pairwise verdicts exist only where Base is also correct, so the audit
    // population is the both-correct intersection: keep only the TaLM finals
    // that have a Base-vs-TaLM pair verdict.
    std::set<std::pair<std::string, std::string>> paired;
    for (const metrics::PairVerdict& p : store.pairs) {
        const bool base_talm =
            (p.side_a == corpus::Variant::Base && p.side_b == corpus::Variant::TaLM) ||
            (p.side_a == corpus::Variant::TaLM && p.side_b == corpus::Variant::Base);
        if (base_talm) paired.insert({p.problem_id, p.model_id});
    }
    std::vector<metrics::FinalVerdict> kept;
    for (metrics::FinalVerdict& f : store.finals) {
        if (f.variant == corpus::Variant::TaLM && f.correct &&
            !paired.count({f.problem_id, f.model_id})) {
            continue;
        }
        kept.push_back(std::move(f));
    }
    store.finals = std::move(kept);

    std::vector<code_analysis::PrecursorRecord> precursors;
    for (const json& row : read_jsonl(cfg.output_dir / "analysis" / "precursors.jsonl")) {
        precursors.push_back(code_analysis::PrecursorRecord::from_json(row));
    }

    const std::vector<triage::RiskRecord> records =
        triage::build_risk_records(store, precursors);

    const std::map<std::string, corpus::Problem> problems =
        problem_index(evaluation_problems(cfg));
    std::map<std::pair<std::string, std::string>, const corpus::Transcript*> talm_at;
    const std::vector<corpus::Transcript> ts = evaluation_transcripts(cfg, problems);
    for (const corpus::Transcript& t : ts) {
        if (t.variant == corpus::Variant::TaLM) talm_at[{t.problem_id, t.model_id}] = &t;
    }

    // bundles carry only the three-condition positives; the full candidate
    // population stays in risk_records.jsonl
    std::map<std::string, std::vector<triage::RiskRecord>> by_model;
    for (const triage::RiskRecord& r : records) {
        if (r.high_risk()) by_model[r.model_id].push_back(r);
    }

    std::vector<std::string> outputs;
    std::set<std::string> slugs;
    for (const auto& [model, group] : by_model) {
        const std::string slug = model_slug(model);
        if (!slugs.insert(slug).second) {
            raise(errc::precondition,
                  "model ids collide after slugging for bundle filenames: " + model);
        }
        triage::TriageBundle bundle;
        bundle.model_id = model;
        for (const triage::RiskRecord& r : triage::top_k_by_miss_rate(
                 group, static_cast<std::size_t>(cfg.triage_top_k))) {
            auto it = talm_at.find({r.problem_id, r.model_id});
            if (it == talm_at.end()) {
                raise(errc::join_failure, "risk record for problem " + r.problem_id +
                                              ", model " + r.model_id +
                                              " has no transcript");
            }
            bundle.records.push_back({r, *it->second, triage::Annotation{}});
        }
        const std::string rel = "triage/bundle_" + slug + ".json";
        triage::write_bundle(cfg.output_dir / rel, bundle);
        outputs.push_back(rel);
    }

    std::vector<json> record_rows;
    record_rows.reserve(records.size());
    for (const triage::RiskRecord& r : records) record_rows.push_back(r.to_json());
    // stage marker, written last
    write_jsonl(tdir / "risk_records.jsonl", record_rows);
    outputs.push_back("triage/risk_records.jsonl");
    return outputs;
}

std::vector<std::string> stage_forge(const RunConfig& cfg, gateway::Gateway& gw) {
    const fs::path fdir = cfg.output_dir / "forge";
    fs::create_directories(fdir);
    const std::map<std::string, corpus::Problem> problems =
        problem_index(evaluation_problems(cfg));
    const std::vector<corpus::Transcript> ts = evaluation_transcripts(cfg, problems);
    std::set<std::tuple<std::string, std::string, int>> correct;
    for (const metrics::FinalVerdict& f :
         metrics::read_final_verdicts(cfg.output_dir / "verdicts" / "finals.jsonl")) {
        if (f.correct) correct.insert({f.problem_id, f.model_id, static_cast<int>(f.variant)});
    }

    std::vector<const corpus::Transcript*> sources;
    for (const corpus::Transcript& t : ts) {
        if (t.variant == corpus::Variant::TaLM &&
            correct.count({t.problem_id, t.model_id, static_cast<int>(t.variant)})) {
            sources.push_back(&t);
        }
    }

    std::vector<std::vector<forge::PreferencePair>> built(sources.size());
    std::vector<std::vector<std::string>> warnings(sources.size());
    parallel_for(sources.size(), cfg.parallelism, [&](std::size_t i) {
        const corpus::Transcript& t = *sources[i];
        try {
            built[i] = forge::forge_pairs(problems.at(t.problem_id), t,
                                          /*chosen_correct=*/true, gw, cfg.judge_model,
                                          gw, cfg.judge_model, &warnings[i]);
        } catch (const Error& e) {
            if (e.code() != errc::no_eligible_span) throw;
            warnings[i].push_back("problem " + t.problem_id + ", model " + t.model_id +
                                  ": no degradable span");
        }
    });

    std::vector<forge::PreferencePair> all;
    std::string warn_text;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        for (forge::PreferencePair& p : built[i]) all.push_back(std::move(p));
        for (const std::string& w : warnings[i]) warn_text += w + "\n";
    }
    std::vector<corpus::Problem> plist;
    plist.reserve(problems.size());
    for (const auto& [id, p] : problems) plist.push_back(p);
    write_file_atomic(fdir / "warnings.txt", warn_text);
    // stage marker, written last
    forge::write_pairs(fdir / "training_pairs.jsonl", all, plist);
    return {"forge/training_pairs.jsonl", "forge/warnings.txt"};
}

// Skips the stage when its marker file (the last artifact the stage writes)
// already exists; an empty marker always runs. Failures are rethrown tagged
// with the stage name.
StageRecord run_stage(const std::string& name, const RunConfig& cfg,
                      const std::string& marker,
                      const std::function<std::vector<std::string>()>& body,
                      const std::function<std::vector<std::string>()>& existing_outputs) {
    StageRecord rec;
    rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    if (!marker.empty() && fs::exists(cfg.output_dir / marker)) {
        rec.skipped = true;
        rec.outputs = existing_outputs();
    } else {
        try {
            rec.outputs = body();
        } catch (const Error& e) {
            std::string msg = e.what();
            const std::string prefix = std::string(errc_name(e.code())) + ": ";
            if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
            raise(e.code(), "stage " + name + ": " + msg +
                                " (partial stage outputs remain under " +
                                cfg.output_dir.string() + ")");
        }
    }
    std::sort(rec.outputs.begin(), rec.outputs.end());
    rec.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    return rec;
}

}  // namespace

// ---- configuration ----------------------------------------------------------------

fs::path RunConfig::resolved_cache_dir() const {
    return cache_dir.empty() ? output_dir / "judge_cache" : cache_dir;
}

json RunConfig::snapshot() const {
    return json{
        {"judge_model", judge_model},
        {"prm_model", prm_model},
        {"mode", gateway::to_string(mode)},
        {"seed", seed},
        {"prm_threshold", prm_threshold},
        {"parallelism", parallelism},
        {"curate", curate},
        {"forge", forge},
        {"min_difficulty", min_difficulty},
        {"eval_fraction", eval_fraction},
        {"dev_fraction", dev_fraction},
        {"triage_top_k", triage_top_k},
    };
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) raise(errc::config_error, "config root must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "corpus") {
                cfg.corpus = fs::path(value.get<std::string>());
            } else if (key == "transcripts") {
                cfg.transcripts = fs::path(value.get<std::string>());
            } else if (key == "output_dir") {
                cfg.output_dir = fs::path(value.get<std::string>());
            } else if (key == "cache_dir") {
                cfg.cache_dir = fs::path(value.get<std::string>());
            } else if (key == "judge_model") {
                cfg.judge_model = value.get<std::string>();
            } else if (key == "prm_model") {
                cfg.prm_model = value.get<std::string>();
            } else if (key == "mode") {
                cfg.mode = gateway::mode_from_string(value.get<std::string>());
            } else if (key == "seed") {
                cfg.seed = value.get<std::uint64_t>();
            } else if (key == "prm_threshold") {
                cfg.prm_threshold = value.get<double>();
            } else if (key == "parallelism") {
                cfg.parallelism = value.get<int>();
            } else if (key == "curate") {
                cfg.curate = value.get<bool>();
            } else if (key == "forge") {
                cfg.forge = value.get<bool>();
            } else if (key == "min_difficulty") {
                cfg.min_difficulty = value.get<double>();
            } else if (key == "eval_fraction") {
                cfg.eval_fraction = value.get<double>();
            } else if (key == "dev_fraction") {
                cfg.dev_fraction = value.get<double>();
            } else if (key == "triage_top_k") {
                cfg.triage_top_k = value.get<int>();
            } else {
                raise(errc::config_error, "unknown config key \"" + key + "\"");
            }
        } catch (const json::exception& e) {
            raise(errc::config_error, "config key \"" + key + "\": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const fs::path& file) {
    json j;
    try {
        j = json::parse(read_file(file));
    } catch (const json::exception& e) {
        raise(errc::config_error, "config file " + file.string() + ": " + e.what());
    }
    return config_from_json(j);
}

namespace {

// Checks that hold for every stage: input files and numeric ranges.
void validate_inputs(const RunConfig& cfg) {
    if (cfg.corpus.empty()) raise(errc::config_error, "corpus path is required");
    if (!fs::is_regular_file(cfg.corpus)) {
        raise(errc::config_error, "corpus file not found: " + cfg.corpus.string());
    }
    if (cfg.transcripts.empty()) raise(errc::config_error, "transcripts path is required");
    if (!fs::is_regular_file(cfg.transcripts)) {
        raise(errc::config_error,
              "transcripts file not found: " + cfg.transcripts.string());
    }
    if (cfg.output_dir.empty()) raise(errc::config_error, "output_dir is required");
    if (cfg.judge_model.empty() || cfg.prm_model.empty()) {
        raise(errc::config_error, "judge_model and prm_model must be non-empty");
    }
    if (!(cfg.prm_threshold >= 0.0 && cfg.prm_threshold <= 1.0)) {
        raise(errc::config_error, "prm_threshold must lie in [0, 1]");
    }
    if (cfg.parallelism < 1) raise(errc::config_error, "parallelism must be at least 1");
    if (!(cfg.min_difficulty >= 0.0)) {
        raise(errc::config_error, "min_difficulty must be non-negative");
    }
    if (!(cfg.eval_fraction > 0.0 && cfg.eval_fraction < 1.0)) {
        raise(errc::config_error, "eval_fraction must lie strictly between 0 and 1");
    }
    if (!(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0)) {
        raise(errc::config_error, "dev_fraction must lie strictly between 0 and 1");
    }
    if (cfg.triage_top_k < 1) raise(errc::config_error, "triage_top_k must be at least 1");
}

}  // namespace

void validate_config(const RunConfig& cfg) {
    validate_inputs(cfg);
    if (cfg.mode == gateway::Mode::Replay &&
        !fs::is_directory(cfg.resolved_cache_dir())) {
        raise(errc::config_error, "replay mode needs an existing cache directory: " +
                                      cfg.resolved_cache_dir().string());
    }
    if (cfg.mode == gateway::Mode::Live) {
        const char* key = std::getenv("JUDGE_API_KEY");
        if (!key || !*key) raise(errc::config_error, "live mode requires JUDGE_API_KEY");
    }
}

// ---- manifest -----------------------------------------------------------------------

ordered_json RunManifest::to_json() const {
    ordered_json out;
    out["run_id"] = run_id;
    out["tool_version"] = tool_version;
    out["config"] = ordered_json::parse(config.dump());
    out["corpus_digest"] = corpus_digest;
    out["transcripts_digest"] = transcripts_digest;
    ordered_json stages_j = ordered_json::array();
    for (const StageRecord& s : stages) {
        ordered_json sj;
        sj["name"] = s.name;
        sj["duration_ms"] = s.duration_ms;
        sj["skipped"] = s.skipped;
        sj["outputs"] = s.outputs;
        stages_j.push_back(std::move(sj));
    }
    out["stages"] = std::move(stages_j);
    ordered_json arts = ordered_json::object();
    for (const auto& [path, digest] : artifacts) arts[path] = digest;
    out["artifacts"] = std::move(arts);
    return out;
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.config = j.at("config");
        m.corpus_digest = j.at("corpus_digest").get<std::string>();
        m.transcripts_digest = j.at("transcripts_digest").get<std::string>();
        for (const json& sj : j.at("stages")) {
            StageRecord s;
            s.name = sj.at("name").get<std::string>();
            s.duration_ms = sj.at("duration_ms").get<std::int64_t>();
            s.skipped = sj.at("skipped").get<bool>();
            s.outputs = sj.at("outputs").get<std::vector<std::string>>();
            m.stages.push_back(std::move(s));
        }
        for (const auto& [path, digest] : j.at("artifacts").items()) {
            m.artifacts[path] = digest.get<std::string>();
        }
    } catch (const json::exception& e) {
        raise(errc::malformed_record, std::string("run manifest: ") + e.what());
    }
    return m;
}

std::string compute_run_id(const RunConfig& cfg, const std::string& corpus_digest,
                           const std::string& transcripts_digest) {
    const json ident{{"config", cfg.snapshot()},
                     {"corpus", corpus_digest},
                     {"transcripts", transcripts_digest},
                     {"tool_version", kToolVersion}};
    return sha256_hex(ident.dump()).substr(0, 16);
}

// ---- orchestration ------------------------------------------------------------------

RunManifest run_pipeline(const RunConfig& cfg,
                         std::shared_ptr<gateway::Transport> transport) {
    validate_config(cfg);
    fs::create_directories(cfg.output_dir);
    RunLock lock(cfg.output_dir / ".lock");

    std::shared_ptr<gateway::Transport> t = std::move(transport);
    if (!t && cfg.mode != gateway::Mode::Replay) {
        t = std::make_shared<gateway::HttpTransport>(
            gateway::HttpTransport::config_from_env());
    }
    gateway::Gateway gw(cfg.mode, cfg.resolved_cache_dir(), std::move(t));

    RunManifest m;
    m.tool_version = kToolVersion;
    m.config = cfg.snapshot();
    m.corpus_digest = sha256_file(cfg.corpus);
    m.transcripts_digest = sha256_file(cfg.transcripts);
    m.run_id = compute_run_id(cfg, m.corpus_digest, m.transcripts_digest);

    if (cfg.curate) {
        m.stages.push_back(run_stage(
            "curate", cfg, "corpus_manifest.json", [&] { return stage_curate(cfg, gw); },
            [] {
                return std::vector<std::string>{"curation_verdicts.jsonl",
                                                "curated_problems.jsonl",
                                                "corpus_manifest.json"};
            }));
    }
    m.stages.push_back(run_stage(
        "evaluate", cfg, "verdicts/profiles.jsonl",
        [&] { return stage_evaluate(cfg, gw); },
        [&] { return list_relative(cfg.output_dir, "verdicts"); }));
    m.stages.push_back(run_stage(
        "analyze", cfg, "analysis/precursors.jsonl", [&] { return stage_analyze(cfg); },
        [&] { return list_relative(cfg.output_dir, "analysis"); }));
    m.stages.push_back(run_stage(
        "stats", cfg, "stats/invocation_rates.json", [&] { return stage_stats(cfg); },
        [&] { return list_relative(cfg.output_dir, "stats"); }));
    m.stages.push_back(run_stage(
        "triage", cfg, "triage/risk_records.jsonl", [&] { return stage_triage(cfg); },
        [&] { return list_relative(cfg.output_dir, "triage"); }));
    if (cfg.forge) {
        m.stages.push_back(run_stage(
            "forge", cfg, "forge/training_pairs.jsonl",
            [&] { return stage_forge(cfg, gw); },
            [&] { return list_relative(cfg.output_dir, "forge"); }));
    }
    m.stages.push_back(run_stage(
        "report", cfg, "report/summary.txt", [&] { return emit_report(cfg.output_dir); },
        [&] { return list_relative(cfg.output_dir, "report"); }));

    for (const StageRecord& s : m.stages) {
        for (const std::string& rel : s.outputs) {
            m.artifacts[rel] = sha256_file(cfg.output_dir / rel);
        }
    }
    write_file_atomic(cfg.output_dir / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
}

StageRecord run_single_stage(const RunConfig& cfg, const std::string& stage,
                             std::shared_ptr<gateway::Transport> transport) {
    auto none = [] { return std::vector<std::string>{}; };
    if (stage == "report") {
        if (cfg.output_dir.empty()) raise(errc::config_error, "output_dir is required");
        fs::create_directories(cfg.output_dir);
        RunLock lock(cfg.output_dir / ".lock");
        return run_stage("report", cfg, "", [&] { return emit_report(cfg.output_dir); },
                         none);
    }
    const bool needs_gateway =
        stage == "curate" || stage == "evaluate" || stage == "forge";
    if (needs_gateway) {
        validate_config(cfg);
    } else {
        validate_inputs(cfg);
    }
    fs::create_directories(cfg.output_dir);
    RunLock lock(cfg.output_dir / ".lock");
    std::optional<gateway::Gateway> gw;
    if (needs_gateway) {
        std::shared_ptr<gateway::Transport> t = std::move(transport);
        if (!t && cfg.mode != gateway::Mode::Replay) {
            t = std::make_shared<gateway::HttpTransport>(
                gateway::HttpTransport::config_from_env());
        }
        gw.emplace(cfg.mode, cfg.resolved_cache_dir(), std::move(t));
    }
    // an explicitly requested stage always executes; the response cache, not
    // a marker check, is what makes the repetition cheap
    if (stage == "curate") {
        return run_stage("curate", cfg, "", [&] { return stage_curate(cfg, *gw); }, none);
    }
    if (stage == "evaluate") {
        return run_stage("evaluate", cfg, "", [&] { return stage_evaluate(cfg, *gw); },
                         none);
    }
    if (stage == "analyze") {
        return run_stage("analyze", cfg, "", [&] { return stage_analyze(cfg); }, none);
    }
    if (stage == "stats") {
        return run_stage("stats", cfg, "", [&] { return stage_stats(cfg); }, none);
    }
    if (stage == "triage") {
        return run_stage("triage", cfg, "", [&] { return stage_triage(cfg); }, none);
    }
    if (stage == "forge") {
        return run_stage("forge", cfg, "", [&] { return stage_forge(cfg, *gw); }, none);
    }
    raise(errc::config_error, "unknown stage \"" + stage + "\"");
}

}  // namespace timaudit::pipeline
