// Serial reference vs OpenMP client loop on one training round sweep.

#include <benchmark/benchmark.h>

#include <numeric>

#include "domo/fedopt.hpp"

using namespace domo;

namespace {

struct Workload {
    std::vector<objectives::ClientObjective> clients;
    fedopt::Experiment ex;
};

Workload make_workload(int K, int d, int n, int P, int R) {
    Workload w;
    RngStream rng(99, StreamKind::Synthetic);
    for (int k = 0; k < K; ++k) {
        std::vector<objectives::Sample> samples(n);
        for (int i = 0; i < n; ++i) {
            samples[i].features.resize(d);
            for (double& v : samples[i].features) v = rng.normal();
            samples[i].target = rng.normal();
        }
        w.clients.push_back(objectives::ClientObjective::least_squares(std::move(samples)));
    }
    for (const auto& c : w.clients) {
        w.ex.oracles.push_back(&c);
        std::vector<int> shard(c.sample_count());
        std::iota(shard.begin(), shard.end(), 0);
        w.ex.shards.push_back(std::move(shard));
    }
    w.ex.cfg = fedopt::method_from_name("domo");
    w.ex.cfg.eta = 0.001;
    w.ex.cfg.local_steps = P;
    w.ex.rounds = R;
    w.ex.batch_size = 16;
    w.ex.seed = 7;
    w.ex.x0 = Vec(d, 0.0);
    w.ex.compute_metrics = false;  // time the round kernel, not the metric sweeps
    return w;
}

void bench_rounds(benchmark::State& state) {
    const int threads = static_cast<int>(state.range(0));
    Workload w = make_workload(32, 2048, 64, 4, 3);
    for (auto _ : state) {
        auto out = fedopt::run(w.ex, fedopt::ExecPolicy{threads});
        benchmark::DoNotOptimize(out.final_model.data());
    }
}

}  // namespace

BENCHMARK(bench_rounds)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
