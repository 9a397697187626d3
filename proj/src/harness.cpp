#include "domo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <stdexcept>

namespace domo::harness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("config: " + path + ": " + msg);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) fail(path + "." + it.key(), "unknown key");
    }
}

double need_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

int need_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
}

std::uint64_t need_u64(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<std::uint64_t>();
}

std::string need_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

bool need_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected a boolean");
    return j.get<bool>();
}

SyntheticSpec parse_synthetic(const json& j, const std::string& path) {
    check_keys(j, path, {"classes", "per_class", "dim", "separation", "noise", "seed"});
    SyntheticSpec s;
    if (j.contains("classes")) s.classes = need_int(j["classes"], path + ".classes");
    if (j.contains("per_class")) s.per_class = need_int(j["per_class"], path + ".per_class");
    if (j.contains("dim")) s.dim = need_int(j["dim"], path + ".dim");
    if (j.contains("separation")) s.separation = need_number(j["separation"], path + ".separation");
    if (j.contains("noise")) s.noise = need_number(j["noise"], path + ".noise");
    if (j.contains("seed")) s.seed = need_u64(j["seed"], path + ".seed");
    return s;
}

EnsembleSpec parse_ensemble(const json& j, const std::string& path) {
    check_keys(j, path,
               {"dim", "clients", "samples_per_client", "hetero", "noise", "seed", "shared_features"});
    EnsembleSpec e;
    if (j.contains("dim")) e.dim = need_int(j["dim"], path + ".dim");
    if (j.contains("clients")) e.clients = need_int(j["clients"], path + ".clients");
    if (j.contains("samples_per_client"))
        e.samples_per_client = need_int(j["samples_per_client"], path + ".samples_per_client");
    if (j.contains("hetero")) e.hetero = need_number(j["hetero"], path + ".hetero");
    if (j.contains("noise")) e.noise = need_number(j["noise"], path + ".noise");
    if (j.contains("seed")) e.seed = need_u64(j["seed"], path + ".seed");
    if (j.contains("shared_features"))
        e.shared_features = need_bool(j["shared_features"], path + ".shared_features");
    return e;
}

MethodOverride parse_override(const json& j, const std::string& path) {
    check_keys(j, path, {"mu_s", "mu_l", "alpha", "beta", "eta", "boundary", "fusion"});
    MethodOverride o;
    if (j.contains("mu_s")) o.mu_s = need_number(j["mu_s"], path + ".mu_s");
    if (j.contains("mu_l")) o.mu_l = need_number(j["mu_l"], path + ".mu_l");
    if (j.contains("alpha")) o.alpha = need_number(j["alpha"], path + ".alpha");
    if (j.contains("beta")) o.beta = need_number(j["beta"], path + ".beta");
    if (j.contains("eta")) o.eta = need_number(j["eta"], path + ".eta");
    if (j.contains("boundary")) o.boundary = need_string(j["boundary"], path + ".boundary");
    if (j.contains("fusion")) o.fusion = need_string(j["fusion"], path + ".fusion");
    return o;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (methods.empty()) throw std::runtime_error("config: methods: need at least one method");
    for (const auto& m : methods)
        if (!fedopt::known_method(m)) throw std::runtime_error("config: methods: unknown method " + m);
    for (const auto& [name, ov] : overrides) {
        (void)ov;
        if (!fedopt::known_method(name))
            throw std::runtime_error("config: overrides: unknown method " + name);
    }
    if (seeds.empty()) throw std::runtime_error("config: seeds: need at least one seed");
    if (rounds < 1) throw std::runtime_error("config: rounds: must be >= 1");
    if (batch_size < 1) throw std::runtime_error("config: batch_size: must be >= 1");
    if (eta <= 0.0) throw std::runtime_error("config: eta: must be positive");
    if (local_steps && local_epochs)
        throw std::runtime_error("config: give local_steps or local_epochs, not both");
    if (local_steps && *local_steps < 1)
        throw std::runtime_error("config: local_steps: must be >= 1");
    if (local_epochs && *local_epochs <= 0.0)
        throw std::runtime_error("config: local_epochs: must be positive");
    const int sources = (problem.synthetic ? 1 : 0) + (problem.csv ? 1 : 0) +
                        (problem.ensemble ? 1 : 0);
    if (sources != 1)
        throw std::runtime_error("config: problem: exactly one of synthetic/csv/ensemble required");
    if (problem.ensemble && problem.kind != objectives::Kind::Quadratic &&
        problem.kind != objectives::Kind::LeastSquares)
        throw std::runtime_error("config: problem.ensemble: only for quadratic/least-squares kinds");
    if (problem.regularization < 0.0)
        throw std::runtime_error("config: problem.regularization: must be nonnegative");
    if (!problem.ensemble) {
        if (partition.clients < 1) throw std::runtime_error("config: partition.clients: must be >= 1");
        if (partition.similarity < 0.0 || partition.similarity > 1.0)
            throw std::runtime_error("config: partition.similarity: must be in [0, 1]");
    }
    if (participation && *participation < 1)
        throw std::runtime_error("config: participation: must be >= 1");
}

ExperimentSpec parse_config_json(const json& j) {
    check_keys(j, "$",
               {"problem", "partition", "methods", "overrides", "rounds", "local_steps",
                "local_epochs", "batch_size", "eta", "init_scale", "seeds", "trace",
                "trace_cap", "participation", "output"});
    ExperimentSpec s;

    if (!j.contains("problem")) fail("$.problem", "required");
    const json& pj = j["problem"];
    check_keys(pj, "$.problem", {"kind", "regularization", "hidden", "synthetic", "csv", "ensemble"});
    if (!pj.contains("kind")) fail("$.problem.kind", "required");
    s.problem.kind = objectives::kind_from_name(need_string(pj["kind"], "$.problem.kind"));
    if (pj.contains("regularization"))
        s.problem.regularization = need_number(pj["regularization"], "$.problem.regularization");
    if (pj.contains("hidden")) s.problem.hidden = need_int(pj["hidden"], "$.problem.hidden");
    if (pj.contains("synthetic"))
        s.problem.synthetic = parse_synthetic(pj["synthetic"], "$.problem.synthetic");
    if (pj.contains("csv")) s.problem.csv = need_string(pj["csv"], "$.problem.csv");
    if (pj.contains("ensemble"))
        s.problem.ensemble = parse_ensemble(pj["ensemble"], "$.problem.ensemble");
    if (!s.problem.synthetic && !s.problem.csv && !s.problem.ensemble)
        s.problem.synthetic = SyntheticSpec{};  // default desk-scale dataset

    if (j.contains("partition")) {
        const json& qj = j["partition"];
        check_keys(qj, "$.partition", {"clients", "similarity", "seed"});
        if (qj.contains("clients")) s.partition.clients = need_int(qj["clients"], "$.partition.clients");
        if (qj.contains("similarity"))
            s.partition.similarity = need_number(qj["similarity"], "$.partition.similarity");
        if (qj.contains("seed")) s.partition.seed = need_u64(qj["seed"], "$.partition.seed");
    }

    if (!j.contains("methods")) fail("$.methods", "required");
    if (!j["methods"].is_array()) fail("$.methods", "expected an array");
    for (const auto& m : j["methods"]) s.methods.push_back(need_string(m, "$.methods[]"));

    if (j.contains("overrides")) {
        if (!j["overrides"].is_object()) fail("$.overrides", "expected an object");
        for (auto it = j["overrides"].begin(); it != j["overrides"].end(); ++it)
            s.overrides[it.key()] = parse_override(it.value(), "$.overrides." + it.key());
    }

    if (!j.contains("rounds")) fail("$.rounds", "required");
    s.rounds = need_int(j["rounds"], "$.rounds");
    if (j.contains("local_steps") && j.contains("local_epochs"))
        fail("$.local_steps", "exclusive with local_epochs");
    if (j.contains("local_steps")) s.local_steps = need_int(j["local_steps"], "$.local_steps");
    if (j.contains("local_epochs"))
        s.local_epochs = need_number(j["local_epochs"], "$.local_epochs");
    if (!s.local_steps && !s.local_epochs) s.local_steps = 5;  // desk-scale default
    if (j.contains("batch_size")) s.batch_size = need_int(j["batch_size"], "$.batch_size");
    if (j.contains("eta")) s.eta = need_number(j["eta"], "$.eta");
    if (j.contains("init_scale")) s.init_scale = need_number(j["init_scale"], "$.init_scale");

    if (!j.contains("seeds")) fail("$.seeds", "required");
    if (!j["seeds"].is_array()) fail("$.seeds", "expected an array");
    for (const auto& v : j["seeds"]) s.seeds.push_back(need_u64(v, "$.seeds[]"));

    if (j.contains("trace")) s.trace = need_bool(j["trace"], "$.trace");
    if (j.contains("trace_cap")) s.trace_cap = need_u64(j["trace_cap"], "$.trace_cap");
    if (j.contains("participation")) s.participation = need_int(j["participation"], "$.participation");

    if (j.contains("output")) {
        const json& oj = j["output"];
        check_keys(oj, "$.output", {"csv", "json", "trace_dir"});
        if (oj.contains("csv")) s.output.csv = need_string(oj["csv"], "$.output.csv");
        if (oj.contains("json")) s.output.json = need_string(oj["json"], "$.output.json");
        if (oj.contains("trace_dir")) s.output.trace_dir = need_string(oj["trace_dir"], "$.output.trace_dir");
    }

    s.validate();
    return s;
}

ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
    return parse_config_json(j);
}

json spec_to_json(const ExperimentSpec& s) {
    json j;
    json pj;
    pj["kind"] = objectives::kind_name(s.problem.kind);
    pj["regularization"] = s.problem.regularization;
    pj["hidden"] = s.problem.hidden;
    if (s.problem.synthetic) {
        const auto& sy = *s.problem.synthetic;
        pj["synthetic"] = {{"classes", sy.classes},     {"per_class", sy.per_class},
                           {"dim", sy.dim},             {"separation", sy.separation},
                           {"noise", sy.noise},         {"seed", sy.seed}};
    }
    if (s.problem.csv) pj["csv"] = *s.problem.csv;
    if (s.problem.ensemble) {
        const auto& e = *s.problem.ensemble;
        pj["ensemble"] = {{"dim", e.dim},
                          {"clients", e.clients},
                          {"samples_per_client", e.samples_per_client},
                          {"hetero", e.hetero},
                          {"noise", e.noise},
                          {"seed", e.seed},
                          {"shared_features", e.shared_features}};
    }
    j["problem"] = pj;
    json qj;
    qj["clients"] = s.partition.clients;
    qj["similarity"] = s.partition.similarity;
    if (s.partition.seed) qj["seed"] = *s.partition.seed;
    j["partition"] = qj;
    j["methods"] = s.methods;
    if (!s.overrides.empty()) {
        json ov;
        for (const auto& [name, o] : s.overrides) {
            json oj;
            if (o.mu_s) oj["mu_s"] = *o.mu_s;
            if (o.mu_l) oj["mu_l"] = *o.mu_l;
            if (o.alpha) oj["alpha"] = *o.alpha;
            if (o.beta) oj["beta"] = *o.beta;
            if (o.eta) oj["eta"] = *o.eta;
            if (o.boundary) oj["boundary"] = *o.boundary;
            if (o.fusion) oj["fusion"] = *o.fusion;
            ov[name] = oj;
        }
        j["overrides"] = ov;
    }
    j["rounds"] = s.rounds;
    if (s.local_steps) j["local_steps"] = *s.local_steps;
    if (s.local_epochs) j["local_epochs"] = *s.local_epochs;
    j["batch_size"] = s.batch_size;
    j["eta"] = s.eta;
    if (s.init_scale) j["init_scale"] = *s.init_scale;
    j["seeds"] = s.seeds;
    j["trace"] = s.trace;
    j["trace_cap"] = s.trace_cap;
    if (s.participation) j["participation"] = *s.participation;
    j["output"] = {{"csv", s.output.csv}, {"json", s.output.json}, {"trace_dir", s.output.trace_dir}};
    return j;
}

namespace {

std::vector<objectives::Sample> gather(const partition::Dataset& data, const std::vector<int>& shard) {
    std::vector<objectives::Sample> out;
    out.reserve(shard.size());
    for (int idx : shard) out.push_back(data.samples[idx]);
    return out;
}

objectives::ClientObjective make_client(const ExperimentSpec& spec, const partition::Dataset& data,
                                        const std::vector<int>& shard) {
    using objectives::ClientObjective;
    using objectives::Kind;
    std::vector<objectives::Sample> samples = gather(data, shard);
    switch (spec.problem.kind) {
        case Kind::Quadratic:
            for (auto& s : samples) s.target = 1.0;  // unit-weight centers
            return ClientObjective::quadratic(std::move(samples), spec.problem.regularization);
        case Kind::LeastSquares:
            return ClientObjective::least_squares(std::move(samples), spec.problem.regularization);
        case Kind::Logistic:
            return ClientObjective::logistic(std::move(samples), data.num_classes,
                                             spec.problem.regularization);
        case Kind::Mlp2: {
            objectives::Mlp2Shape shape{data.feature_dim(), spec.problem.hidden, data.num_classes};
            return ClientObjective::mlp2(std::move(samples), shape, spec.problem.regularization);
        }
    }
    throw std::logic_error("make_client: unreachable");
}

void build_ensemble(const ExperimentSpec& spec, BuiltProblem& bp) {
    const EnsembleSpec& e = *spec.problem.ensemble;
    if (e.dim < 1 || e.clients < 1 || e.samples_per_client < 1)
        throw std::runtime_error("config: problem.ensemble: counts must be positive");
    RngStream rng(e.seed, StreamKind::Synthetic, 1);

    std::vector<Vec> shared;
    if (e.shared_features && spec.problem.kind == objectives::Kind::LeastSquares) {
        shared.resize(e.samples_per_client, Vec(e.dim));
        for (auto& a : shared)
            for (double& v : a) v = rng.normal();
    }
    Vec x_base(e.dim);
    for (double& v : x_base) v = rng.normal();

    for (int k = 0; k < e.clients; ++k) {
        Vec x_k = x_base;
        for (double& v : x_k) v += e.hetero * rng.normal();
        std::vector<objectives::Sample> samples(e.samples_per_client);
        for (int i = 0; i < e.samples_per_client; ++i) {
            objectives::Sample& s = samples[i];
            if (spec.problem.kind == objectives::Kind::LeastSquares) {
                if (e.shared_features) {
                    s.features = shared[i];
                } else {
                    s.features.resize(e.dim);
                    for (double& v : s.features) v = rng.normal();
                }
                s.target = vec::dot(s.features, x_k) + e.noise * rng.normal();
            } else {  // Quadratic: centers around the client optimum
                s.features = x_k;
                for (double& v : s.features) v += e.noise * rng.normal();
                s.target = 1.0;
            }
        }
        bp.clients.push_back(spec.problem.kind == objectives::Kind::LeastSquares
                                 ? objectives::ClientObjective::least_squares(
                                       std::move(samples), spec.problem.regularization)
                                 : objectives::ClientObjective::quadratic(
                                       std::move(samples), spec.problem.regularization));
        std::vector<int> shard(e.samples_per_client);
        std::iota(shard.begin(), shard.end(), 0);
        bp.shards.push_back(std::move(shard));
    }
    bp.dim = e.dim;
    bp.digest = derive_stream_key(e.seed, StreamKind::Synthetic,
                                  static_cast<std::uint64_t>(e.clients),
                                  static_cast<std::uint64_t>(e.dim));
}

}  // namespace

BuiltProblem build_problem(const ExperimentSpec& spec, std::uint64_t run_seed) {
    BuiltProblem bp;
    int shard_floor = 0;
    if (spec.problem.ensemble) {
        build_ensemble(spec, bp);
        shard_floor = spec.problem.ensemble->samples_per_client;
    } else {
        if (spec.problem.synthetic) {
            const auto& sy = *spec.problem.synthetic;
            bp.dataset = partition::make_synthetic(sy.classes, sy.per_class, sy.dim, sy.separation,
                                                   sy.noise, sy.seed);
        } else {
            bp.dataset = partition::load_csv(*spec.problem.csv);
        }
        const std::uint64_t part_seed = spec.partition.seed.value_or(run_seed);
        bp.part = partition::partition_similarity(bp.dataset, spec.partition.clients,
                                                  spec.partition.similarity, part_seed);
        for (const auto& shard : bp.part.shards) {
            bp.clients.push_back(make_client(spec, bp.dataset, shard));
            bp.shards.push_back(shard);
        }
        bp.dim = bp.clients.front().dim();
        bp.digest = partition::partition_digest(bp.part);
        shard_floor = bp.dataset.size() / spec.partition.clients;
    }

    if (spec.local_steps) {
        bp.local_steps = *spec.local_steps;
    } else {
        bp.local_steps = std::max(
            1, static_cast<int>(std::ceil(*spec.local_epochs * shard_floor / spec.batch_size)));
    }
    return bp;
}

fedopt::MethodConfig resolve_method(const ExperimentSpec& spec, const std::string& method, int P) {
    fedopt::MethodConfig cfg = fedopt::method_from_name(method);
    cfg.eta = spec.eta;
    cfg.local_steps = P;
    cfg.participation = spec.participation;
    auto it = spec.overrides.find(method);
    if (it != spec.overrides.end()) {
        const MethodOverride& o = it->second;
        if (o.mu_s) cfg.mu_s = *o.mu_s;
        if (o.mu_l) cfg.mu_l = *o.mu_l;
        if (o.alpha) cfg.alpha = *o.alpha;
        if (o.beta) cfg.beta = *o.beta;
        if (o.eta) cfg.eta = *o.eta;
        if (o.boundary) cfg.boundary = fedopt::boundary_from_name(*o.boundary);
        if (o.fusion) cfg.fusion = fedopt::fusion_from_name(*o.fusion);
    }
    return cfg;
}

Vec initial_model(const ExperimentSpec& spec, int dim, std::uint64_t run_seed) {
    const double scale =
        spec.init_scale.value_or(spec.problem.kind == objectives::Kind::Mlp2 ? 0.3 : 0.0);
    Vec x0(dim, 0.0);
    if (scale != 0.0) {
        RngStream rng(run_seed, StreamKind::Init);
        for (double& v : x0) v = scale * rng.normal();
    }
    return x0;
}

CellResult run_cell(const ExperimentSpec& spec, const std::string& method, std::uint64_t seed,
                    bool with_trace, int client_threads) {
    BuiltProblem bp = build_problem(spec, seed);
    fedopt::Experiment ex;
    ex.oracles.reserve(bp.clients.size());
    for (const auto& c : bp.clients) ex.oracles.push_back(&c);
    ex.shards = bp.shards;
    ex.cfg = resolve_method(spec, method, bp.local_steps);
    ex.rounds = spec.rounds;
    ex.batch_size = spec.batch_size;
    ex.seed = seed;
    ex.x0 = initial_model(spec, bp.dim, seed);
    ex.record_trace = with_trace;
    ex.method_name = method;
    ex.trace_value_cap = spec.trace_cap;

    fedopt::RunOutput ro = fedopt::run(ex, fedopt::ExecPolicy{client_threads});
    CellResult cell;
    cell.method = method;
    cell.seed = seed;
    cell.metrics = std::move(ro.metrics);
    cell.final_model = std::move(ro.final_model);
    cell.trace = std::move(ro.trace);
    cell.partition_digest = bp.digest;
    return cell;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
    mean = 0.0;
    std_out = 0.0;
    if (xs.empty()) return;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    double acc = 0.0;
    for (double v : xs) acc += (v - mean) * (v - mean);
    std_out = std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

CompareOutput compare(const ExperimentSpec& spec, int workers) {
    spec.validate();
    const int M = static_cast<int>(spec.methods.size());
    const int S = static_cast<int>(spec.seeds.size());
    CompareOutput out;
    out.cells.resize(static_cast<std::size_t>(M) * S);

#pragma omp parallel for schedule(static) num_threads(std::max(1, workers)) if (workers > 1)
    for (int i = 0; i < M * S; ++i) {
        const std::string& method = spec.methods[i / S];
        const std::uint64_t seed = spec.seeds[i % S];
        try {
            out.cells[i] = run_cell(spec, method, seed, spec.trace, 1);
        } catch (const std::exception& e) {
            out.cells[i].method = method;
            out.cells[i].seed = seed;
            out.cells[i].failed = true;
            out.cells[i].error = e.what();
        }
    }

    for (int m = 0; m < M; ++m) {
        MethodSummary sum;
        sum.method = spec.methods[m];
        std::vector<double> losses, grads, divs;
        for (int s = 0; s < S; ++s) {
            const CellResult& cell = out.cells[static_cast<std::size_t>(m) * S + s];
            ++sum.runs;
            if (cell.failed || cell.metrics.empty()) {
                ++sum.failures;
                continue;
            }
            const auto& last = cell.metrics.back();
            losses.push_back(last.loss);
            grads.push_back(last.grad_norm_sq);
            divs.push_back(last.divergence);
            sum.comm_floats = last.comm_floats;
        }
        mean_std(losses, sum.final_loss_mean, sum.final_loss_std);
        mean_std(grads, sum.final_grad_mean, sum.final_grad_std);
        mean_std(divs, sum.final_divergence_mean, sum.final_divergence_std);
        out.summaries.push_back(std::move(sum));
    }
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(std::span<const CellResult> cells) {
    std::string out = "method,seed,round,loss,grad_norm_sq,divergence,comm_floats\n";
    for (const CellResult& cell : cells) {
        if (cell.failed) continue;
        for (std::size_t r = 0; r < cell.metrics.size(); ++r) {
            const auto& m = cell.metrics[r];
            out += cell.method;
            out += ',';
            out += std::to_string(cell.seed);
            out += ',';
            out += std::to_string(r);
            out += ',';
            out += fmt_double(m.loss);
            out += ',';
            out += fmt_double(m.grad_norm_sq);
            out += ',';
            out += fmt_double(m.divergence);
            out += ',';
            out += std::to_string(m.comm_floats);
            out += '\n';
        }
    }
    return out;
}

json summary_json(const ExperimentSpec& spec, const CompareOutput& out,
                  std::span<const theory::TheoryReport> reports) {
    if (out.cells.empty()) throw std::invalid_argument("summary_json: empty metrics");
    json j;
    j["schema"] = "domo-summary-v1";
    j["config"] = spec_to_json(spec);
    json sums = json::array();
    for (const auto& s : out.summaries) {
        sums.push_back({{"method", s.method},
                        {"runs", s.runs},
                        {"failures", s.failures},
                        {"final_loss", {{"mean", s.final_loss_mean}, {"std", s.final_loss_std}}},
                        {"final_grad_norm_sq", {{"mean", s.final_grad_mean}, {"std", s.final_grad_std}}},
                        {"final_divergence",
                         {{"mean", s.final_divergence_mean}, {"std", s.final_divergence_std}}},
                        {"comm_floats", s.comm_floats}});
    }
    j["methods"] = sums;
    json cells = json::array();
    for (const auto& c : out.cells) {
        json cj = {{"method", c.method}, {"seed", c.seed}, {"failed", c.failed}};
        if (c.failed) {
            cj["error"] = c.error;
        } else {
            const auto& last = c.metrics.back();
            cj["rounds"] = c.metrics.size();
            cj["partition_digest"] = c.partition_digest;
            cj["final"] = {{"loss", last.loss},
                           {"grad_norm_sq", last.grad_norm_sq},
                           {"divergence", last.divergence},
                           {"comm_floats", last.comm_floats}};
        }
        cells.push_back(cj);
    }
    j["cells"] = cells;
    json reps = json::array();
    for (const auto& r : reports) reps.push_back(r.to_json());
    j["theory_reports"] = reps;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

// Strided trajectory points for the constants evaluation: the client-mean
// models plus the client models themselves, capped per trace.
std::vector<Vec> collect_eval_points(std::span<const fedopt::Trace> traces, int cap_per_trace) {
    std::vector<Vec> points;
    for (const auto& t : traces) {
        const int T = t.R * t.P;
        const int stride = std::max(1, T / std::max(1, cap_per_trace / 2));
        for (int tt = 0; tt < T; tt += stride) {
            auto xb = t.x_bar_at(tt / t.P, tt % t.P);
            points.emplace_back(xb.begin(), xb.end());
        }
        const int kstride = std::max(1, (T * t.K) / std::max(1, cap_per_trace / 2));
        int counter = 0;
        for (int r = 0; r < t.R; ++r)
            for (int p = 0; p < t.P; ++p)
                for (int k = 0; k < t.K; ++k, ++counter)
                    if (counter % kstride == 0) {
                        auto x = t.x_at(r, k, p);
                        points.emplace_back(x.begin(), x.end());
                    }
    }
    return points;
}

}  // namespace

std::vector<theory::TheoryReport> verify_stored_traces(const ExperimentSpec& spec,
                                                       const std::vector<std::string>& trace_paths) {
    spec.validate();
    if (trace_paths.empty()) throw std::invalid_argument("verify: no trace files given");
    std::vector<fedopt::Trace> traces;
    traces.reserve(trace_paths.size());
    for (const auto& p : trace_paths) traces.push_back(fedopt::load_trace(p));

    std::vector<std::string> order;
    for (const auto& t : traces)
        if (std::find(order.begin(), order.end(), t.method) == order.end())
            order.push_back(t.method);

    std::vector<theory::TheoryReport> reports;
    for (const auto& method : order) {
        std::vector<fedopt::Trace> group;
        for (auto& t : traces)
            if (t.method == method) group.push_back(t);

        bool problem_fixed = spec.problem.ensemble.has_value() || spec.partition.seed.has_value();
        if (!problem_fixed) {
            problem_fixed = true;
            for (const auto& t : group) problem_fixed &= (t.seed == group.front().seed);
        }

        std::optional<objectives::ProblemConstants> constants;
        std::vector<objectives::ClientObjective> clients;
        if (problem_fixed) {
            BuiltProblem bp = build_problem(spec, group.front().seed);
            if (bp.dim != group.front().d)
                throw std::runtime_error("verify: trace dimension does not match the config problem");
            objectives::ConstantsOptions copts;
            copts.eval_points = collect_eval_points(group, 256);
            copts.batch_size = spec.batch_size;
            constants = objectives::constants(bp.clients, copts);
            clients = std::move(bp.clients);
        }
        reports.push_back(theory::verify_traces(group, clients, constants));
    }
    return reports;
}

}  // namespace domo::harness
