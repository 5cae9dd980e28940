// Serial reference vs OpenMP kernels, plus one full training step.

#include "hlps/kernels.hpp"
#include "hlps/rng.hpp"
#include "hlps/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace hlps;

namespace {

gp::Matrix random_states(long n) {
    Rng rng(1);
    return rng.normal_matrix(n, 7);
}

std::vector<kernels::ChainProblem> random_chains(long count) {
    Rng rng(2);
    std::vector<kernels::ChainProblem> out(static_cast<size_t>(count));
    for (auto& p : out) {
        p.increments = (rng.normal_matrix(50, 1).array().abs() + 0.01).matrix();
        p.F = rng.normal_matrix(50, 2);
        p.hp = gp::GpHyperparams::from_natural(1.0, 2.0, 0.1);
    }
    return out;
}

template <class F>
void run_states(benchmark::State& state, F f) {
    const gp::Matrix s = random_states(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(f(s));
    state.SetComplexityN(state.range(0));
}

void BM_distances_serial(benchmark::State& s) { run_states(s, kernels::serial::pairwise_distances); }
void BM_distances_omp(benchmark::State& s) { run_states(s, kernels::omp::pairwise_distances); }
void BM_covariance_serial(benchmark::State& s) {
    run_states(s, [](const gp::Matrix& x) { return kernels::serial::matern32_covariance(x, 1.0, 2.0); });
}
void BM_covariance_omp(benchmark::State& s) {
    run_states(s, [](const gp::Matrix& x) { return kernels::omp::matern32_covariance(x, 1.0, 2.0); });
}

void BM_chains_serial(benchmark::State& state) {
    const auto p = random_chains(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::filter_chains(p));
}
void BM_chains_omp(benchmark::State& state) {
    const auto p = random_chains(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::filter_chains(p));
}

void BM_train_step(benchmark::State& state) {
    train::TrainConfig c;
    c.warmup = 256;
    train::Trainer t(c, 0);
    t.run(c.warmup);
    for (auto _ : state) t.run(1);
}

}  // namespace

BENCHMARK(BM_distances_serial)->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_distances_omp)->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_covariance_serial)->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_covariance_omp)->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_chains_serial)->Arg(64)->Arg(512);
BENCHMARK(BM_chains_omp)->Arg(64)->Arg(512);
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond)->MinTime(2.0);

BENCHMARK_MAIN();
