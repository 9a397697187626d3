#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "domo/harness.hpp"

namespace fs = std::filesystem;
using namespace domo;

namespace {

std::string out_path(const std::string& out_dir, const std::string& name) {
    if (out_dir.empty()) return name;
    fs::create_directories(out_dir);
    return (fs::path(out_dir) / name).string();
}

std::string trace_file_name(const std::string& method, std::uint64_t seed) {
    return method + "_" + std::to_string(seed) + ".trc";
}

int cmd_run(const std::string& config_path, std::string method, std::optional<std::uint64_t> seed,
            const std::string& out_dir, bool trace_flag, int workers) {
    harness::ExperimentSpec spec = harness::parse_config(config_path);
    if (method.empty()) method = spec.methods.front();
    const std::uint64_t run_seed = seed.value_or(spec.seeds.front());
    const bool with_trace = trace_flag || spec.trace;

    harness::CellResult cell = harness::run_cell(spec, method, run_seed, with_trace, workers);

    const std::string csv = harness::metrics_csv(std::span(&cell, 1));
    const std::string csv_path = out_path(out_dir, spec.output.csv);
    harness::write_text_file(csv_path, csv);
    std::cout << "wrote " << csv_path << " (" << cell.metrics.size() << " rounds)\n";
    if (cell.trace) {
        fs::path dir = out_dir.empty() ? fs::path(spec.output.trace_dir)
                                       : fs::path(out_dir) / spec.output.trace_dir;
        fs::create_directories(dir);
        const std::string tpath = (dir / trace_file_name(method, run_seed)).string();
        fedopt::save_trace(*cell.trace, tpath);
        std::cout << "wrote " << tpath << "\n";
    }
    const auto& last = cell.metrics.back();
    std::printf("final: loss=%.6g grad_norm_sq=%.6g divergence=%.6g comm_floats=%llu\n", last.loss,
                last.grad_norm_sq, last.divergence,
                static_cast<unsigned long long>(last.comm_floats));
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out_dir,
                const std::string& format, int workers) {
    harness::ExperimentSpec spec = harness::parse_config(config_path);
    harness::CompareOutput out = harness::compare(spec, workers);

    bool any_failed = false;
    for (const auto& c : out.cells)
        if (c.failed) {
            any_failed = true;
            std::cerr << "cell failed: " << c.method << " seed " << c.seed << ": " << c.error
                      << "\n";
        }

    if (format.empty() || format == "csv") {
        const std::string path = out_path(out_dir, spec.output.csv);
        harness::write_text_file(path, harness::metrics_csv(out.cells));
        std::cout << "wrote " << path << "\n";
    }
    if (format.empty() || format == "json") {
        const std::string path = out_path(out_dir, spec.output.json);
        harness::write_text_file(path, harness::summary_json(spec, out, {}).dump(2) + "\n");
        std::cout << "wrote " << path << "\n";
    }
    if (spec.trace) {
        fs::path dir = out_dir.empty() ? fs::path(spec.output.trace_dir)
                                       : fs::path(out_dir) / spec.output.trace_dir;
        fs::create_directories(dir);
        for (const auto& c : out.cells)
            if (c.trace) fedopt::save_trace(*c.trace, (dir / trace_file_name(c.method, c.seed)).string());
        std::cout << "wrote traces to " << dir.string() << "\n";
    }
    for (const auto& s : out.summaries)
        std::printf("%-12s final grad_norm_sq = %.6g +- %.6g (loss %.6g +- %.6g)\n",
                    s.method.c_str(), s.final_grad_mean, s.final_grad_std, s.final_loss_mean,
                    s.final_loss_std);
    return any_failed ? 1 : 0;
}

int cmd_verify(const std::string& config_path, std::vector<std::string> trace_paths,
               const std::string& trace_dir, const std::string& out_file, bool strict) {
    harness::ExperimentSpec spec = harness::parse_config(config_path);
    if (!trace_dir.empty())
        for (const auto& e : fs::directory_iterator(trace_dir))
            if (e.path().extension() == ".trc") trace_paths.push_back(e.path().string());
    std::sort(trace_paths.begin(), trace_paths.end());
    if (trace_paths.empty()) {
        std::cerr << "verify: no traces given (use --traces or --trace-dir)\n";
        return 1;
    }

    std::vector<theory::TheoryReport> reports = harness::verify_stored_traces(spec, trace_paths);
    nlohmann::json j = nlohmann::json::array();
    bool all_ok = true;
    for (const auto& r : reports) {
        j.push_back(r.to_json());
        all_ok &= r.all_applicable_pass();
        std::printf("%-12s lemma1=%s stitching=%s lemma2=%s inconsistency=%s divergence=%s theorem1=%s\n",
                    r.method.c_str(),
                    r.lemma1.status.applicable ? (r.lemma1.pass ? "pass" : "FAIL") : "n/a",
                    r.stitching_pass ? "pass" : "FAIL",
                    r.lemma2.status.applicable ? (r.lemma2.pass ? "pass" : "FAIL") : "n/a",
                    r.inconsistency.status.applicable ? (r.inconsistency.holds ? "holds" : "VIOLATED")
                                                      : "n/a",
                    r.divergence.status.applicable ? (r.divergence.holds ? "holds" : "VIOLATED")
                                                   : "n/a",
                    r.theorem1.status.applicable ? (r.theorem1.holds ? "holds" : "VIOLATED") : "n/a");
    }
    if (!out_file.empty()) {
        harness::write_text_file(out_file, j.dump(2) + "\n");
        std::cout << "wrote " << out_file << "\n";
    } else {
        std::cout << j.dump(2) << "\n";
    }
    return strict && !all_ok ? 1 : 0;
}

int cmd_partition_stats(const std::string& config_path, std::optional<std::uint64_t> seed,
                        const std::string& out_file) {
    harness::ExperimentSpec spec = harness::parse_config(config_path);
    if (spec.problem.ensemble) {
        std::cerr << "partition-stats: ensemble problems have no dataset partition\n";
        return 1;
    }
    harness::BuiltProblem bp = harness::build_problem(spec, seed.value_or(spec.seeds.front()));
    const auto stats = partition::shard_stats(bp.dataset, bp.part);

    std::string csv = "shard,size,purity,tv_from_uniform";
    for (int c = 0; c < bp.dataset.num_classes; ++c) csv += ",count_" + std::to_string(c);
    csv += "\n";
    char buf[64];
    for (std::size_t k = 0; k < stats.size(); ++k) {
        csv += std::to_string(k) + "," + std::to_string(bp.part.shards[k].size());
        std::snprintf(buf, sizeof(buf), ",%.17g", stats[k].purity);
        csv += buf;
        std::snprintf(buf, sizeof(buf), ",%.17g", stats[k].tv_from_uniform);
        csv += buf;
        for (auto c : stats[k].label_counts) csv += "," + std::to_string(c);
        csv += "\n";
    }
    if (!out_file.empty()) {
        harness::write_text_file(out_file, csv);
        std::cout << "wrote " << out_file << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated double-momentum optimization simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, format, trace_dir, out_file;
    std::vector<std::string> trace_paths;
    std::optional<std::uint64_t> seed;
    bool trace_flag = false, strict = false;
    int workers = 1;

    auto* run = app.add_subcommand("run", "run one method for one seed");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--method", method, "method name (default: first in config)");
    run->add_option("--seed", seed, "run seed (default: first in config)");
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--trace", trace_flag, "record and store the full trace");
    run->add_option("--workers", workers, "OpenMP threads for the client loop");

    auto* cmp = app.add_subcommand("compare", "run the full method x seed grid");
    cmp->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmp->add_option("--out", out_dir, "output directory");
    cmp->add_option("--format", format, "csv or json (default: both)")
        ->check(CLI::IsMember({"csv", "json"}));
    cmp->add_option("--workers", workers, "OpenMP threads across grid cells");

    auto* ver = app.add_subcommand("verify", "run theory checks on stored traces");
    ver->add_option("--config", config_path, "experiment config (JSON)")->required();
    ver->add_option("--traces", trace_paths, "trace files");
    ver->add_option("--trace-dir", trace_dir, "directory of .trc files");
    ver->add_option("--out", out_file, "report JSON path (default: stdout)");
    ver->add_flag("--strict", strict, "nonzero exit if an applicable check fails");

    auto* ps = app.add_subcommand("partition-stats", "per-shard label histograms");
    ps->add_option("--config", config_path, "experiment config (JSON)")->required();
    ps->add_option("--seed", seed, "allocation seed (default: first in config)");
    ps->add_option("--out", out_file, "CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run)) return cmd_run(config_path, method, seed, out_dir, trace_flag, workers);
        if (app.got_subcommand(cmp)) return cmd_compare(config_path, out_dir, format, workers);
        if (app.got_subcommand(ver)) return cmd_verify(config_path, trace_paths, trace_dir, out_file, strict);
        if (app.got_subcommand(ps)) return cmd_partition_stats(config_path, seed, out_file);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
