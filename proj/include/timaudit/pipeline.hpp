#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "timaudit/gateway.hpp"
#include "timaudit/util.hpp"

namespace timaudit::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
    fs::path corpus;       // problems, one JSON object per line
    fs::path transcripts;  // transcripts, one JSON object per line
    fs::path output_dir;
    fs::path cache_dir;  // empty means <output_dir>/judge_cache
    std::string judge_model = "judge";
    std::string prm_model = "prm";
    gateway::Mode mode = gateway::Mode::Replay;
    std::uint64_t seed = 17;
    double prm_threshold = 0.5;
    int parallelism = 4;
    bool curate = false;  // run the admission stage before evaluating
    bool forge = false;   // build preference pairs after triage
    double min_difficulty = 0.0;
    double eval_fraction = 0.595;
    double dev_fraction = 0.10;
    int triage_top_k = 10;

    fs::path resolved_cache_dir() const;
    // Semantic parameters only; input identity lives in the content digests,
    // so a manifest is byte-stable across checkout locations.
    json snapshot() const;
};

// Unknown keys are rejected so a typo cannot silently fall back to a default.
RunConfig config_from_json(const json& j);
RunConfig load_config(const fs::path& file);

// ConfigError on any violation: unreadable inputs, replay without a cache
// directory, live mode without JUDGE_API_KEY, out-of-range knobs.
void validate_config(const RunConfig& cfg);

struct StageRecord {
    std::string name;
    std::int64_t duration_ms = 0;
    bool skipped = false;                // outputs were already present
    std::vector<std::string> outputs;    // run-dir-relative, sorted
};

struct RunManifest {
    std::string run_id;
    std::string tool_version;
    json config;  // RunConfig::snapshot()
    std::string corpus_digest;
    std::string transcripts_digest;
    std::vector<StageRecord> stages;
    std::map<std::string, std::string> artifacts;  // relative path -> sha256

    ordered_json to_json() const;
    static RunManifest from_json(const json& j);
};

// Derived from the config snapshot and the input digests; identical inputs
// and settings always name the same run.
std::string compute_run_id(const RunConfig& cfg, const std::string& corpus_digest,
                           const std::string& transcripts_digest);

// Executes curate? -> evaluate -> analyze -> stats -> triage -> forge? ->
// report under a run-directory lock file. A stage whose outputs already
// exist is skipped, so a rerun resumes instead of re-judging; within a
// half-finished stage the response cache absorbs the repeated calls.
// Stage failures are rethrown with the stage name attached; whatever the
// stage wrote stays behind for the retry. The transport argument is a test
// seam; by default live and record modes build one from the environment.
RunManifest run_pipeline(const RunConfig& cfg,
                         std::shared_ptr<gateway::Transport> transport = nullptr);

// Runs exactly one named stage ("curate", "evaluate", "analyze", "stats",
// "triage", "forge", "report") against the run directory, under the same
// lock. Unlike run_pipeline, an explicitly requested stage always executes,
// overwriting its previous outputs; repeated judge work lands in the cache.
StageRecord run_single_stage(const RunConfig& cfg, const std::string& stage,
                             std::shared_ptr<gateway::Transport> transport = nullptr);

// Renders the report files (tables as CSV, plot series as TSV, a plain-text
// summary) from a completed run directory. MissingArtifact when the stats
// stage outputs are absent. Returns the written files, run-dir-relative.
std::vector<std::string> emit_report(const fs::path& run_dir);

}  // namespace timaudit::pipeline
