#include "domo/fedopt.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

#include "domo/partition.hpp"

namespace domo::fedopt {

Vec infer_server_momentum(const Vec& x_prev, const Vec& x_cur, double alpha, double eta, int P) {
    vec::require_same_size(x_prev, x_cur, "infer_server_momentum");
    if (alpha <= 0.0 || eta <= 0.0 || P < 1)
        throw std::invalid_argument("infer_server_momentum: alpha, eta, P must be positive");
    Vec m(x_cur.size());
    const double inv = 1.0 / (alpha * eta * static_cast<double>(P));
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = (x_prev[j] - x_cur[j]) * inv;
    vec::require_finite(m, "infer_server_momentum");
    return m;
}

Vec local_round(ClientState& client, const objectives::GradOracle& obj, std::span<const int> shard,
                const MethodConfig& cfg, const Vec& m_server, RngStream& rng, int batch_size,
                int round_index, StepRecord* record) {
    const int d = obj.dim();
    const int P = cfg.local_steps;
    if (static_cast<int>(client.x.size()) != d || static_cast<int>(client.m.size()) != d)
        throw std::invalid_argument("local_round: client state has wrong dimension");
    if (static_cast<int>(shard.size()) != obj.sample_count())
        throw std::invalid_argument("local_round: shard size does not match objective");
    if (batch_size < 1) throw std::invalid_argument("local_round: batch size must be >= 1");

    if (cfg.fusion == Fusion::Pre)
        vec::axpy(-cfg.eta * cfg.beta * static_cast<double>(P), m_server, client.x);

    Vec d_accum(d, 0.0);
    for (int p = 0; p < P; ++p) {
        if (record) {
            std::copy_n(client.x.data(), d, record->x_steps.data() + std::size_t(p) * d);
            if (!record->m_steps.empty())
                std::copy_n(client.m.data(), d, record->m_steps.data() + std::size_t(p) * d);
        }
        const std::vector<int> batch =
            partition::sample_batch_positions(shard.size(), batch_size, rng);
        const Vec g = obj.gradient(client.x, batch);
        if (record && !record->g_steps.empty())
            std::copy_n(g.data(), d, record->g_steps.data() + std::size_t(p) * d);

        for (int j = 0; j < d; ++j) client.m[j] = cfg.mu_l * client.m[j] + g[j];
        vec::axpy(-cfg.eta, client.m, client.x);
        if (cfg.fusion == Fusion::Intra) vec::axpy(-cfg.eta * cfg.beta, m_server, client.x);
        vec::add(d_accum, client.m);

        if (!vec::all_finite(client.x) || !vec::all_finite(client.m))
            throw DivergenceError(round_index, p, client.client_id);
    }
    if (record) {
        std::copy_n(client.x.data(), d, record->x_steps.data() + std::size_t(P) * d);
        if (!record->m_steps.empty())
            std::copy_n(client.m.data(), d, record->m_steps.data() + std::size_t(P) * d);
    }
    vec::scale(d_accum, 1.0 / static_cast<double>(P));
    return d_accum;
}

void server_round(ServerState& server, const RoundResult& result, const MethodConfig& cfg) {
    if (result.participants.empty()) throw std::invalid_argument("server_round: zero participants");
    if (result.d.size() != result.participants.size())
        throw std::invalid_argument("server_round: d / participants mismatch");
    const std::size_t d = server.x_cur.size();
    const std::size_t V = result.d.size();
    Vec mean(d, 0.0);
    Vec scratch(V);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < V; ++i) scratch[i] = result.d[i][j];
        mean[j] = vec::pairwise_sum(scratch) / static_cast<double>(V);
    }
    for (std::size_t j = 0; j < d; ++j) server.m[j] = cfg.mu_s * server.m[j] + mean[j];
    server.x_prev = server.x_cur;
    vec::axpy(-cfg.alpha * cfg.eta * static_cast<double>(cfg.local_steps), server.m, server.x_cur);
    vec::require_finite(server.x_cur, "server_round");
    ++server.round;
}

std::vector<int> sample_participants(int K, int S, int round, RngStream& rng) {
    (void)round;  // the caller keys the stream by round
    if (S < 1 || S > K) throw std::invalid_argument("sample_participants: S outside [1, K]");
    std::vector<int> pool(K);
    std::iota(pool.begin(), pool.end(), 0);
    if (S == K) return pool;
    for (int i = 0; i < S; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(K - i)));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(S);
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace {

double oracle_global_loss(std::span<const objectives::GradOracle* const> oracles, const Vec& x) {
    double acc = 0.0;
    for (const auto* o : oracles) acc += o->full_loss(x);
    return acc / static_cast<double>(oracles.size());
}

double oracle_global_grad_norm_sq(std::span<const objectives::GradOracle* const> oracles,
                                  const Vec& x) {
    Vec g(x.size(), 0.0);
    for (const auto* o : oracles) vec::add(g, o->full_grad(x));
    vec::scale(g, 1.0 / static_cast<double>(oracles.size()));
    return vec::squared_norm(g);
}

}  // namespace

RunOutput run(const Experiment& ex, const ExecPolicy& exec) {
    const int K = static_cast<int>(ex.oracles.size());
    if (K < 1) throw std::invalid_argument("run: need at least one client");
    if (static_cast<int>(ex.shards.size()) != K)
        throw std::invalid_argument("run: shards / oracles mismatch");
    if (ex.rounds < 1) throw std::invalid_argument("run: rounds must be >= 1");
    ex.cfg.validate(K);
    const int d = ex.oracles.front()->dim();
    for (const auto* o : ex.oracles)
        if (o->dim() != d) throw std::invalid_argument("run: clients disagree on dimension");
    if (static_cast<int>(ex.x0.size()) != d)
        throw std::invalid_argument("run: x0 has wrong dimension");
    vec::require_finite(ex.x0, "run: x0");

    const int P = ex.cfg.local_steps;
    const int R = ex.rounds;
    const int S = ex.cfg.participation.value_or(K);

    RunOutput out;
    out.metrics.reserve(R);

    if (ex.record_trace) {
        if (S < K) throw std::invalid_argument("run: traces require full participation");
        const std::uint64_t values = std::uint64_t(R) * P * K * d;
        if (values > ex.trace_value_cap)
            throw std::invalid_argument("run: trace of " + std::to_string(values) +
                                        " values exceeds cap " + std::to_string(ex.trace_value_cap));
        Trace t;
        t.R = R;
        t.P = P;
        t.K = K;
        t.d = d;
        t.seed = ex.seed;
        t.method = ex.method_name;
        t.cfg = ex.cfg;
        t.allocate();
        out.trace = std::move(t);
    }

    ServerState server = ServerState::init(ex.x0);
    if (out.trace) {
        std::copy_n(server.x_cur.data(), d, out.trace->x_server.data());
        // m_server row 0 is already zero
    }

    // Scratch per-round step capture; used for divergence and x_bar when no
    // trace is kept. Per-client slices keep parallel writers apart.
    std::vector<double> x_scratch;
    if (!out.trace) x_scratch.assign(std::size_t(K) * (P + 1) * d, 0.0);

    Vec boundary_m(d, 0.0);  // shared start buffer under Boundary::Average
    std::vector<Vec> final_m(ex.cfg.boundary == Boundary::Average ? K : 0);

    const std::uint64_t floats_one_way_per_participant =
        static_cast<std::uint64_t>(d) * (ex.cfg.doubles_comm() ? 2 : 1);
    std::uint64_t cum_comm = 0;

    std::vector<int> all_clients(K);
    std::iota(all_clients.begin(), all_clients.end(), 0);

    for (int r = 0; r < R; ++r) {
        std::vector<int> participants;
        if (S < K) {
            RngStream prng(ex.seed, StreamKind::Participation, 0, static_cast<std::uint64_t>(r));
            participants = sample_participants(K, S, r, prng);
        } else {
            participants = all_clients;
        }
        const int V = static_cast<int>(participants.size());

        const Vec m_fused =
            infer_server_momentum(server.x_prev, server.x_cur, ex.cfg.alpha, ex.cfg.eta, P);

        RoundResult result;
        result.participants = participants;
        result.d.resize(V);

        std::exception_ptr failure = nullptr;
        std::atomic_flag failure_set;

#pragma omp parallel for schedule(static) num_threads(std::max(1, exec.threads)) \
    if (exec.threads > 1)
        for (int i = 0; i < V; ++i) {
            try {
                const int k = participants[i];
                ClientState cs{server.x_cur,
                               ex.cfg.boundary == Boundary::Average ? boundary_m : Vec(d, 0.0), k};
                RngStream rng(ex.seed, StreamKind::Batch, static_cast<std::uint64_t>(k),
                              static_cast<std::uint64_t>(r));
                StepRecord rec;
                if (out.trace) {
                    rec.x_steps = out.trace->client_x_slice(r, k);
                    rec.m_steps = out.trace->client_m_slice(r, k);
                    rec.g_steps = out.trace->client_g_slice(r, k);
                } else {
                    rec.x_steps = {&x_scratch[std::size_t(k) * (P + 1) * d], std::size_t(P + 1) * d};
                }
                result.d[i] = local_round(cs, *ex.oracles[k], ex.shards[k], ex.cfg, m_fused, rng,
                                          ex.batch_size, r, &rec);
                if (ex.cfg.boundary == Boundary::Average) final_m[k] = std::move(cs.m);
            } catch (...) {
                if (!failure_set.test_and_set()) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);

        // Divergence and x_bar from the captured steps, single-threaded and
        // in fixed client order.
        auto x_step = [&](int k, int p) -> const double* {
            if (out.trace) return out.trace->x_at(r, k, p).data();
            return &x_scratch[(std::size_t(k) * (P + 1) + p) * d];
        };
        double divergence = 0.0;
        Vec xbar(d);
        Vec scratch(V);
        for (int p = 0; p < P; ++p) {
            for (int j = 0; j < d; ++j) {
                for (int i = 0; i < V; ++i) scratch[i] = x_step(participants[i], p)[j];
                xbar[j] = vec::pairwise_sum(scratch) / static_cast<double>(V);
            }
            if (out.trace)
                std::copy_n(xbar.data(), d, out.trace->x_bar.data() + (std::size_t(r) * P + p) * d);
            double acc = 0.0;
            for (int k : participants)
                acc += vec::squared_distance(std::span<const double>(x_step(k, p), std::size_t(d)),
                                             std::span<const double>(xbar.data(), std::size_t(d)));
            divergence += acc / static_cast<double>(V);
        }
        divergence /= static_cast<double>(P);

        if (ex.cfg.boundary == Boundary::Average) {
            Vec mscratch(K);
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < K; ++k) mscratch[k] = final_m[k][j];
                boundary_m[j] = vec::pairwise_sum(mscratch) / static_cast<double>(K);
            }
        }

        result.floats_up = static_cast<std::uint64_t>(V) * floats_one_way_per_participant;
        result.floats_down = result.floats_up;
        server_round(server, result, ex.cfg);
        cum_comm += result.floats_up + result.floats_down;

        if (out.trace) {
            std::copy_n(server.x_cur.data(), d,
                        out.trace->x_server.data() + std::size_t(r + 1) * d);
            std::copy_n(server.m.data(), d, out.trace->m_server.data() + std::size_t(r + 1) * d);
        }

        RoundMetrics m;
        if (ex.compute_metrics) {
            m.loss = oracle_global_loss(ex.oracles, server.x_cur);
            m.grad_norm_sq = oracle_global_grad_norm_sq(ex.oracles, server.x_cur);
        }
        m.divergence = divergence;
        m.comm_floats = cum_comm;
        out.metrics.push_back(m);
    }

    out.final_model = server.x_cur;
    return out;
}

}  // namespace domo::fedopt
