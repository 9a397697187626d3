#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "domo/method.hpp"
#include "domo/objectives.hpp"
#include "domo/rng.hpp"
#include "domo/trace.hpp"
#include "domo/vec.hpp"

namespace domo::fedopt {

struct ServerState {
    Vec x_cur;   // x_r
    Vec x_prev;  // x_{r-1}
    Vec m;       // m_r
    int round = 0;

    static ServerState init(const Vec& x0) {
        return ServerState{x0, x0, Vec(x0.size(), 0.0), 0};
    }
};

struct ClientState {
    Vec x;  // local model
    Vec m;  // local momentum buffer
    int client_id = 0;
};

// Thrown when a local model or buffer turns non-finite mid-round.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int round, int step, int client)
        : std::runtime_error("divergence at round " + std::to_string(round) + ", step " +
                             std::to_string(step) + ", client " + std::to_string(client)),
          round_(round), step_(step), client_(client) {}
    int round() const { return round_; }
    int step() const { return step_; }
    int client() const { return client_; }

private:
    int round_, step_, client_;
};

// m_r = (x_{r-1} - x_r) / (alpha * eta * P); the zero vector at round 0
// where x_prev == x_cur. This is the buffer clients use for fusion, so a
// client reconstructed from server state alone replays a round bit-for-bit.
Vec infer_server_momentum(const Vec& x_prev, const Vec& x_cur, double alpha, double eta, int P);

// Optional per-step capture; spans are owned by the caller. x_steps/m_steps
// take P+1 entries of d values (index 0 = state entering the first gradient,
// index P = end of round), g_steps takes P entries.
struct StepRecord {
    std::span<double> x_steps;
    std::span<double> m_steps;
    std::span<double> g_steps;
};

// Executes the P local steps of one client and returns d^{(k)}, the running
// average of the post-update momentum buffers. The fusion displacement moves
// the local model only; it never enters the buffer nor d^{(k)}.
Vec local_round(ClientState& client, const objectives::GradOracle& obj, std::span<const int> shard,
                const MethodConfig& cfg, const Vec& m_server, RngStream& rng, int batch_size,
                int round_index, StepRecord* record = nullptr);

struct RoundResult {
    std::vector<Vec> d;              // aligned with participants, ascending client id
    std::vector<int> participants;
    std::uint64_t floats_up = 0;
    std::uint64_t floats_down = 0;
};

// m <- mu_s * m + mean(d); x <- x - alpha*eta*P*m. The mean runs over the
// participants only, in ascending client order, summed left to right.
void server_round(ServerState& server, const RoundResult& result, const MethodConfig& cfg);

// Uniform S-subset of [0, K), deterministic per (stream, round); returned
// ascending. S == K yields all clients.
std::vector<int> sample_participants(int K, int S, int round, RngStream& rng);

// threads == 1 is the serial reference path; threads > 1 runs the client
// loop on an OpenMP team. Results are identical byte for byte: every client
// owns its state, its RNG stream and its output slot, and all reductions are
// sequential.
struct ExecPolicy {
    int threads = 1;
};

struct RoundMetrics {
    double loss = 0.0;          // f(x_{r+1}), mean over all clients
    double grad_norm_sq = 0.0;  // ||grad f(x_{r+1})||^2
    double divergence = 0.0;    // mean over p of (1/|V|) sum_k ||xbar - x^k||^2
    std::uint64_t comm_floats = 0;  // cumulative floats sent either way
};

struct Experiment {
    std::vector<const objectives::GradOracle*> oracles;  // one per client
    std::vector<std::vector<int>> shards;                // batch sampling domains
    MethodConfig cfg;
    int rounds = 0;
    int batch_size = 32;
    std::uint64_t seed = 0;
    Vec x0;
    bool record_trace = false;
    bool compute_metrics = true;  // per-round loss/gradient evaluation via the oracles
    std::string method_name;
    std::uint64_t trace_value_cap = 100'000'000;  // R*P*K*d guard for traces
};

struct RunOutput {
    Vec final_model;
    std::vector<RoundMetrics> metrics;
    std::optional<Trace> trace;
};

RunOutput run(const Experiment& ex, const ExecPolicy& exec = {});

}  // namespace domo::fedopt
