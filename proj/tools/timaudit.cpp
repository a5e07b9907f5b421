#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "timaudit/errors.hpp"
#include "timaudit/pipeline.hpp"

namespace {

using timaudit::errc;
using timaudit::Error;
namespace pipeline = timaudit::pipeline;

// every RunConfig knob as an unset-able override; flags beat the config
// file, the config file beats the built-in defaults
struct Overrides {
    std::string config_file;
    std::optional<std::string> corpus;
    std::optional<std::string> transcripts;
    std::optional<std::string> output_dir;
    std::optional<std::string> cache_dir;
    std::optional<std::string> judge_model;
    std::optional<std::string> prm_model;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<double> prm_threshold;
    std::optional<int> parallelism;
    int curate = -1;  // -1 unset, 0 off, 1 on
    int forge = -1;
    std::optional<double> min_difficulty;
    std::optional<double> eval_fraction;
    std::optional<double> dev_fraction;
    std::optional<int> triage_top_k;
};

void add_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_file,
                    "JSON config file; any flag below overrides it");
    cmd->add_option("--corpus", o.corpus, "problems file, one JSON object per line");
    cmd->add_option("--transcripts", o.transcripts,
                    "transcripts file, one JSON object per line");
    cmd->add_option("--output-dir", o.output_dir, "run directory for all artifacts");
    cmd->add_option("--cache-dir", o.cache_dir,
                    "judge response cache (default: <output-dir>/judge_cache)");
    cmd->add_option("--judge-model", o.judge_model, "judge model id");
    cmd->add_option("--prm-model", o.prm_model, "process reward model id");
    cmd->add_option("--mode", o.mode, "live, replay, or record")
        ->check(CLI::IsMember({"live", "replay", "record"}));
    cmd->add_option("--seed", o.seed, "seed for side randomization and splits");
    cmd->add_option("--prm-threshold", o.prm_threshold,
                    "minimum step score counted as sound");
    cmd->add_option("--parallelism", o.parallelism, "worker threads within a stage");
    cmd->add_flag("--curate{1},--no-curate{0}", o.curate,
                  "run the corpus admission stage first");
    cmd->add_flag("--forge{1},--no-forge{0}", o.forge,
                  "build preference pairs after triage");
    cmd->add_option("--min-difficulty", o.min_difficulty,
                    "admission floor for rated problems");
    cmd->add_option("--eval-fraction", o.eval_fraction,
                    "share of admitted problems assigned to the eval split");
    cmd->add_option("--dev-fraction", o.dev_fraction,
                    "share of the non-eval remainder assigned to the dev split");
    cmd->add_option("--top-k", o.triage_top_k, "audit bundle size per model");
}

pipeline::RunConfig build_config(const Overrides& o) {
    pipeline::RunConfig cfg = o.config_file.empty()
                                  ? pipeline::RunConfig{}
                                  : pipeline::load_config(o.config_file);
    if (o.corpus) cfg.corpus = *o.corpus;
    if (o.transcripts) cfg.transcripts = *o.transcripts;
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
    if (o.judge_model) cfg.judge_model = *o.judge_model;
    if (o.prm_model) cfg.prm_model = *o.prm_model;
    if (o.mode) cfg.mode = timaudit::gateway::mode_from_string(*o.mode);
    if (o.seed) cfg.seed = *o.seed;
    if (o.prm_threshold) cfg.prm_threshold = *o.prm_threshold;
    if (o.parallelism) cfg.parallelism = *o.parallelism;
    if (o.curate != -1) cfg.curate = o.curate == 1;
    if (o.forge != -1) cfg.forge = o.forge == 1;
    if (o.min_difficulty) cfg.min_difficulty = *o.min_difficulty;
    if (o.eval_fraction) cfg.eval_fraction = *o.eval_fraction;
    if (o.dev_fraction) cfg.dev_fraction = *o.dev_fraction;
    if (o.triage_top_k) cfg.triage_top_k = *o.triage_top_k;
    return cfg;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case errc::config_error:
            return 2;
        case errc::replay_miss:
            return 4;
        default:
            return 3;
    }
}

void print_stage(const pipeline::StageRecord& rec) {
    std::cout << "stage " << rec.name << (rec.skipped ? " skipped" : " done") << " ("
              << rec.duration_ms << " ms, " << rec.outputs.size() << " files)\n";
    for (const std::string& rel : rec.outputs) std::cout << "  " << rel << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "audits tool-assisted math solutions for reasoning degradation: judged "
        "metrics, code-shape statistics, high-risk triage, preference-pair forging"};
    app.set_version_flag("--version", pipeline::kToolVersion);
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> stage_commands = {
        {"curate", "admit problems where code helps but does not finish the job"},
        {"evaluate", "judge final answers, pairwise wins, missing steps, step scores"},
        {"analyze", "measure code complexity and detect precursor phrases"},
        {"stats", "aggregate tables, bins, correlations, and deltas"},
        {"triage", "flag high-risk solutions and write audit bundles"},
        {"forge", "build degraded preference pairs from correct solutions"},
        {"report", "render CSV/TSV tables and a plain-text summary"},
        {"run", "all stages in order, resuming whatever already exists"},
    };
    // stable storage: CLI11 keeps references to these
    std::vector<Overrides> overrides(stage_commands.size());
    std::vector<CLI::App*> cmds;
    for (std::size_t i = 0; i < stage_commands.size(); ++i) {
        CLI::App* cmd = app.add_subcommand(stage_commands[i].first,
                                           stage_commands[i].second);
        add_options(cmd, overrides[i]);
        cmds.push_back(cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad invocations are configuration errors
    }

    try {
        for (std::size_t i = 0; i < cmds.size(); ++i) {
            if (!cmds[i]->parsed()) continue;
            const std::string& name = stage_commands[i].first;
            const pipeline::RunConfig cfg = build_config(overrides[i]);
            if (name == "run") {
                const pipeline::RunManifest m = pipeline::run_pipeline(cfg);
                for (const pipeline::StageRecord& rec : m.stages) print_stage(rec);
                std::cout << "run " << m.run_id << " complete: " << m.artifacts.size()
                          << " artifacts under " << cfg.output_dir.string() << "\n";
            } else {
                print_stage(pipeline::run_single_stage(cfg, name));
            }
            return 0;
        }
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
