#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domo/fedopt.hpp"
#include "domo/partition.hpp"
#include "domo/theory.hpp"

namespace domo::harness {

struct SyntheticSpec {
    int classes = 10;
    int per_class = 60;
    int dim = 8;
    double separation = 6.0;
    double noise = 1.0;
    std::uint64_t seed = 7;
};

// Direct per-client construction for the quadratic kinds: client targets are
// displaced by `hetero`, sample noise by `noise`. With shared_features every
// client sees the same design matrix, so the across-client gradient spread is
// constant in x.
struct EnsembleSpec {
    int dim = 10;
    int clients = 8;
    int samples_per_client = 32;
    double hetero = 1.0;
    double noise = 0.5;
    std::uint64_t seed = 5;
    bool shared_features = true;
};

struct ProblemSpec {
    objectives::Kind kind = objectives::Kind::Logistic;
    double regularization = 0.0;
    int hidden = 8;  // mlp2 only
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::string> csv;
    std::optional<EnsembleSpec> ensemble;
};

struct PartitionSpec {
    int clients = 16;
    double similarity = 0.1;
    // When absent the allocation seed is the run seed, matching the protocol
    // of re-allocating data per run; a fixed value pins the partition across
    // seeds (needed when verifying seed ensembles against one problem).
    std::optional<std::uint64_t> seed;
};

struct MethodOverride {
    std::optional<double> mu_s, mu_l, alpha, beta, eta;
    std::optional<std::string> boundary, fusion;
};

struct OutputSpec {
    std::string csv = "metrics.csv";
    std::string json = "summary.json";
    std::string trace_dir = "traces";
};

struct ExperimentSpec {
    ProblemSpec problem;
    PartitionSpec partition;
    std::vector<std::string> methods;
    std::map<std::string, MethodOverride> overrides;
    int rounds = 0;
    std::optional<int> local_steps;      // P
    std::optional<double> local_epochs;  // E; exclusive with local_steps
    int batch_size = 32;
    double eta = 0.05;
    std::optional<double> init_scale;
    std::vector<std::uint64_t> seeds;
    bool trace = false;
    std::uint64_t trace_cap = 100'000'000;  // R*P*K*d guard for stored traces
    std::optional<int> participation;
    OutputSpec output;

    void validate() const;
};

// Strict parse: unknown keys are rejected with the offending path named.
ExperimentSpec parse_config(const std::string& path);
ExperimentSpec parse_config_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ExperimentSpec& spec);

struct BuiltProblem {
    partition::Dataset dataset;   // dataset modes only
    partition::Partition part;    // dataset modes only
    std::vector<objectives::ClientObjective> clients;
    std::vector<std::vector<int>> shards;  // local index domains, one per client
    std::uint64_t digest = 0;
    int dim = 0;
    int local_steps = 0;  // resolved P
};

BuiltProblem build_problem(const ExperimentSpec& spec, std::uint64_t run_seed);

fedopt::MethodConfig resolve_method(const ExperimentSpec& spec, const std::string& method, int P);

Vec initial_model(const ExperimentSpec& spec, int dim, std::uint64_t run_seed);

struct CellResult {
    std::string method;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::vector<fedopt::RoundMetrics> metrics;
    Vec final_model;
    std::optional<fedopt::Trace> trace;
    std::uint64_t partition_digest = 0;
};

CellResult run_cell(const ExperimentSpec& spec, const std::string& method, std::uint64_t seed,
                    bool with_trace, int client_threads = 1);

struct MethodSummary {
    std::string method;
    int runs = 0;
    int failures = 0;
    double final_loss_mean = 0.0, final_loss_std = 0.0;
    double final_grad_mean = 0.0, final_grad_std = 0.0;
    double final_divergence_mean = 0.0, final_divergence_std = 0.0;
    std::uint64_t comm_floats = 0;
};

struct CompareOutput {
    std::vector<CellResult> cells;  // method-major, seed order as configured
    std::vector<MethodSummary> summaries;
};

// Runs every (method, seed) pair. Cells are independent and may execute on
// `workers` OpenMP threads; each cell runs its clients serially so the output
// bytes cannot depend on the worker count. A failed run marks its cell.
CompareOutput compare(const ExperimentSpec& spec, int workers = 1);

std::string metrics_csv(std::span<const CellResult> cells);
nlohmann::json summary_json(const ExperimentSpec& spec, const CompareOutput& out,
                            std::span<const theory::TheoryReport> reports);
void write_text_file(const std::string& path, const std::string& content);

// Loads stored traces, groups them by method and runs the full checker set
// per group. Constants and objectives are attached when the configuration
// pins one problem across the traces (ensemble mode, fixed partition seed, or
// a single run seed); otherwise the ensemble bound checks report
// not-applicable.
std::vector<theory::TheoryReport> verify_stored_traces(const ExperimentSpec& spec,
                                                       const std::vector<std::string>& trace_paths);

}  // namespace domo::harness
