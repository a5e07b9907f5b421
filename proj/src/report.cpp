#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "timaudit/corpus.hpp"
#include "timaudit/errors.hpp"
#include "timaudit/numeric.hpp"
#include "timaudit/pipeline.hpp"
#include "timaudit/triage.hpp"

namespace timaudit::pipeline {

namespace {

json load_artifact(const fs::path& run_dir, const std::string& rel) {
    const fs::path p = run_dir / rel;
    if (!fs::is_regular_file(p)) {
        raise(errc::missing_artifact, rel + " not found under " + run_dir.string());
    }
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        raise(errc::malformed_record, rel + ": " + e.what());
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

// table cell: percent tenths integer or null
std::string cell(const json& v) {
    return v.is_null() ? "-" : format_tenths(v.get<std::int64_t>());
}

// {"num","den"} rational or null, rendered as a percentage with one decimal
std::string rat_cell(const json& v) {
    if (v.is_null()) return "-";
    return format_tenths(
        pct_tenths(v.at("num").get<std::int64_t>(), v.at("den").get<std::int64_t>()));
}

double rat_value(const json& v) {
    return static_cast<double>(v.at("num").get<std::int64_t>()) /
           static_cast<double>(v.at("den").get<std::int64_t>());
}

std::string fmt_double(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", d);
    return buf;
}

std::string fmt_signed_points(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.1f", d);
    return buf;
}

std::string metrics_csv_row(const json& row) {
    return csv_field(row.at("model_id").get<std::string>()) + "," +
           csv_field(row.at("variant").get<std::string>()) + "," +
           cell(row.at("final_acc")) + "," + cell(row.at("miss_rate")) + "," +
           cell(row.at("win_rate")) + "," + cell(row.at("prm_acc")) + "\n";
}

}  // namespace

std::vector<std::string> emit_report(const fs::path& run_dir) {
    // all required inputs load before the first write, so an empty or
    // truncated run directory fails without leaving a half-built report
    const json table = load_artifact(run_dir, "stats/metrics_table.json");
    const json bins = load_artifact(run_dir, "stats/bins.json");
    const json corrs = load_artifact(run_dir, "stats/correlations.json");
    const json deltas = load_artifact(run_dir, "stats/error_deltas.json");
    const json invs = load_artifact(run_dir, "stats/invocation_rates.json");

    const fs::path rdir = run_dir / "report";
    fs::create_directories(rdir);
    std::vector<std::string> written;

    if (fs::is_regular_file(run_dir / "corpus_manifest.json")) {
        const corpus::CorpusManifest cm =
            corpus::CorpusManifest::from_json(load_artifact(run_dir, "corpus_manifest.json"));
        write_file_atomic(rdir / "corpus_manifest.csv", cm.to_csv());
        written.push_back("report/corpus_manifest.csv");
    }

    const std::string header =
        "model,variant,final_accuracy_pct,miss_rate_pct,win_rate_pct,prm_accuracy_pct\n";

    // headline comparison: Base and TaLM rows per model, then their averages
    std::string metrics_csv = header;
    for (const json& row : table.at("rows")) {
        const std::string variant = row.at("variant").get<std::string>();
        if (variant == "Base" || variant == "TaLM") metrics_csv += metrics_csv_row(row);
    }
    for (const json& row : table.at("averages")) {
        const std::string variant = row.at("variant").get<std::string>();
        if (variant == "Base" || variant == "TaLM") metrics_csv += metrics_csv_row(row);
    }
    write_file_atomic(rdir / "metrics_table.csv", metrics_csv);
    written.push_back("report/metrics_table.csv");

    // mitigation comparison: every variant row of models that carry one
    std::set<std::string> mitigation_models;
    for (const json& row : table.at("rows")) {
        const std::string variant = row.at("variant").get<std::string>();
        if (variant == "TaLM+Prompting" || variant == "TaLM+DPO") {
            mitigation_models.insert(row.at("model_id").get<std::string>());
        }
    }
    std::string mitigation_csv = header;
    for (const json& row : table.at("rows")) {
        if (mitigation_models.count(row.at("model_id").get<std::string>())) {
            mitigation_csv += metrics_csv_row(row);
        }
    }
    write_file_atomic(rdir / "mitigation_table.csv", mitigation_csv);
    written.push_back("report/mitigation_table.csv");

    std::string bins_tsv =
        "model\tbin\tpairs\ttool_side_win_pct\tmisses\tmean_miss_pct\tprm_count\tprm_"
        "accuracy_pct\n";
    for (const json& b : bins) {
        bins_tsv += b.at("model_id").get<std::string>() + "\t" +
                    b.at("bin").get<std::string>() + "\t" +
                    std::to_string(b.at("pair_count").get<std::int64_t>()) + "\t" +
                    rat_cell(b.at("win_rate")) + "\t" +
                    std::to_string(b.at("miss_count").get<std::int64_t>()) + "\t" +
                    rat_cell(b.at("mean_miss_rate")) + "\t" +
                    std::to_string(b.at("prm_count").get<std::int64_t>()) + "\t" +
                    rat_cell(b.at("prm_accuracy")) + "\n";
    }
    write_file_atomic(rdir / "bins.tsv", bins_tsv);
    written.push_back("report/bins.tsv");

    std::string corr_tsv = "model\tmetric\tn\tr\tp_value\tsignificance\tnote\n";
    std::string points_tsv = "model\tmetric\tx\ty\n";
    for (const json& c : corrs) {
        const std::string model = c.at("model_id").get<std::string>();
        const std::string metric = c.at("metric").get<std::string>();
        const json& res = c.at("result");
        if (res.is_null()) {
            corr_tsv += model + "\t" + metric + "\t-\t-\t-\t-\t" +
                        c.at("failure").get<std::string>() + "\n";
        } else {
            corr_tsv += model + "\t" + metric + "\t" +
                        std::to_string(res.at("n").get<int>()) + "\t" +
                        fmt_double(res.at("r").get<double>()) + "\t" +
                        fmt_double(res.at("p_value").get<double>()) + "\t" +
                        res.at("significance").get<std::string>() + "\t\n";
        }
        for (const json& pt : c.at("points")) {
            points_tsv += model + "\t" + metric + "\t" +
                          fmt_double(pt.at(0).get<double>()) + "\t" +
                          fmt_double(pt.at(1).get<double>()) + "\n";
        }
    }
    write_file_atomic(rdir / "correlations.tsv", corr_tsv);
    written.push_back("report/correlations.tsv");
    write_file_atomic(rdir / "correlation_points.tsv", points_tsv);
    written.push_back("report/correlation_points.tsv");

    std::string deltas_tsv =
        "model\tn\tlogic\tassumption\tcreativity\talgebra_arithmetic\tnone_of_the_"
        "above\n";
    for (const json& d : deltas) {
        deltas_tsv += d.at("model_id").get<std::string>() + "\t" +
                      std::to_string(d.at("n").get<std::int64_t>()) + "\t" +
                      fmt_double(100.0 * rat_value(d.at("logic"))) + "\t" +
                      fmt_double(100.0 * rat_value(d.at("assumption"))) + "\t" +
                      fmt_double(100.0 * rat_value(d.at("creativity"))) + "\t" +
                      fmt_double(100.0 * rat_value(d.at("algebra_arithmetic"))) + "\t" +
                      fmt_double(100.0 * rat_value(d.at("none_of_the_above"))) + "\n";
    }
    write_file_atomic(rdir / "error_deltas.tsv", deltas_tsv);
    written.push_back("report/error_deltas.tsv");

    std::string inv_tsv = "model\tproblems\twith_tool\tinvocation_rate_pct\n";
    for (const json& r : invs) {
        inv_tsv += r.at("model_id").get<std::string>() + "\t" +
                   std::to_string(r.at("problems").get<std::int64_t>()) + "\t" +
                   std::to_string(r.at("with_tool").get<std::int64_t>()) + "\t" +
                   format_tenths(r.at("rate_tenths").get<std::int64_t>()) + "\n";
    }
    write_file_atomic(rdir / "invocation_rates.tsv", inv_tsv);
    written.push_back("report/invocation_rates.tsv");

    // ---- plain-text roll-up -----------------------------------------------------

    std::string text = "run summary\n===========\n\n";
    text += "metrics table (percent cells; \"-\" = cell not derivable):\n";
    auto summary_row = [&](const json& row) {
        text += "  " + row.at("model_id").get<std::string>() + " " +
                row.at("variant").get<std::string>() + ": final=" +
                cell(row.at("final_acc")) + " miss=" + cell(row.at("miss_rate")) +
                " win=" + cell(row.at("win_rate")) + " prm=" + cell(row.at("prm_acc")) +
                "\n";
    };
    for (const json& row : table.at("rows")) summary_row(row);
    for (const json& row : table.at("averages")) summary_row(row);

    text += "\ncomplexity correlations (miss rate vs code shape):\n";
    if (corrs.empty()) text += "  none\n";
    for (const json& c : corrs) {
        const json& res = c.at("result");
        text += "  " + c.at("model_id").get<std::string>() + " " +
                c.at("metric").get<std::string>() + ": ";
        if (res.is_null()) {
            text += "unavailable (" + c.at("failure").get<std::string>() + ")\n";
        } else {
            text += "r=" + fmt_double(res.at("r").get<double>()) +
                    " n=" + std::to_string(res.at("n").get<int>()) +
                    " p=" + fmt_double(res.at("p_value").get<double>()) + " " +
                    res.at("significance").get<std::string>() + "\n";
        }
    }

    text += "\nerror-profile deltas (TaLM minus Base, percentage points):\n";
    if (deltas.empty()) text += "  none\n";
    for (const json& d : deltas) {
        text += "  " + d.at("model_id").get<std::string>() + " (n=" +
                std::to_string(d.at("n").get<std::int64_t>()) + "): logic=" +
                fmt_signed_points(100.0 * rat_value(d.at("logic"))) + " assumption=" +
                fmt_signed_points(100.0 * rat_value(d.at("assumption"))) +
                " creativity=" + fmt_signed_points(100.0 * rat_value(d.at("creativity"))) +
                " algebra_arithmetic=" +
                fmt_signed_points(100.0 * rat_value(d.at("algebra_arithmetic"))) +
                " none_of_the_above=" +
                fmt_signed_points(100.0 * rat_value(d.at("none_of_the_above"))) + "\n";
    }

    text += "\ninvocation rates (problems with at least one tool call):\n";
    if (invs.empty()) text += "  none\n";
    for (const json& r : invs) {
        text += "  " + r.at("model_id").get<std::string>() + ": " +
                format_tenths(r.at("rate_tenths").get<std::int64_t>()) + "% (" +
                std::to_string(r.at("with_tool").get<std::int64_t>()) + "/" +
                std::to_string(r.at("problems").get<std::int64_t>()) + ")\n";
    }

    if (fs::is_regular_file(run_dir / "triage" / "risk_records.jsonl")) {
        std::int64_t total = 0;
        std::int64_t high = 0;
        for (const json& row : read_jsonl(run_dir / "triage" / "risk_records.jsonl")) {
            ++total;
            if (triage::RiskRecord::from_json(row).high_risk()) ++high;
        }
        text += "\ntriage:\n  risk records: " + std::to_string(total) +
                " (high-risk: " + std::to_string(high) + ")\n";
        std::vector<triage::TriageBundle> bundles;
        std::vector<fs::path> bundle_paths;
        for (const fs::directory_entry& entry :
             fs::directory_iterator(run_dir / "triage")) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("bundle_", 0) == 0) bundle_paths.push_back(entry.path());
        }
        std::sort(bundle_paths.begin(), bundle_paths.end());
        for (const fs::path& p : bundle_paths) bundles.push_back(triage::read_bundle(p));
        const triage::TriageSummary ts = triage::summarize(bundles);
        text += "  annotations: yes=" + std::to_string(ts.yes) + " no=" +
                std::to_string(ts.no) + " unmarked=" + std::to_string(ts.unmarked) +
                "; prevalence: ";
        if (ts.prevalence) {
            text += format_tenths(pct_tenths(*ts.prevalence)) + "%\n";
        } else {
            text += "unannotated\n";
        }
    }

    if (fs::is_regular_file(run_dir / "forge" / "training_pairs.jsonl")) {
        text += "\npreference pairs: " +
                std::to_string(read_jsonl(run_dir / "forge" / "training_pairs.jsonl").size()) +
                "\n";
    }

    // written last: callers treat its presence as report completion
    write_file_atomic(rdir / "summary.txt", text);
    written.push_back("report/summary.txt");
    return written;
}

}  // namespace timaudit::pipeline
