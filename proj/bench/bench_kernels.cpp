#include <benchmark/benchmark.h>

#include <omp.h>

#include <vector>

#include "cgf/kernels.hpp"
#include "cgf/model.hpp"
#include "cgf/random.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    cgf::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Shapes of one training batch: 64 windows of 12 rows, width 32.
constexpr std::size_t kRows = 64 * 12;
constexpr std::size_t kWidth = 32;

void matmul_args(benchmark::internal::Benchmark* b) {
    for (int threads : {1, 2, 4}) b->Arg(threads);
    b->UseRealTime();
}

void BM_MatmulReference(benchmark::State& state) {
    const auto a = random_values(kRows * kWidth, 1);
    const auto w = random_values(kWidth * 64, 2);
    std::vector<double> c(kRows * 64);
    for (auto _ : state) {
        cgf::kernels::reference::matmul(a, w, c, kRows, kWidth, 64);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kRows * kWidth * 64));
}
BENCHMARK(BM_MatmulReference)->UseRealTime();

void BM_MatmulParallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto a = random_values(kRows * kWidth, 1);
    const auto w = random_values(kWidth * 64, 2);
    std::vector<double> c(kRows * 64);
    for (auto _ : state) {
        cgf::kernels::matmul(a, w, c, kRows, kWidth, 64);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kRows * kWidth * 64));
}
BENCHMARK(BM_MatmulParallel)->Apply(matmul_args);

void BM_AttentionReference(benchmark::State& state) {
    const auto q = random_values(kRows * kWidth, 3);
    const auto k = random_values(kRows * kWidth, 4);
    const auto v = random_values(kRows * kWidth, 5);
    std::vector<double> out(kRows * kWidth), probs(64 * 4 * 12 * 12);
    for (auto _ : state) {
        cgf::kernels::reference::attention_forward(q, k, v, out, probs, 64, 12, kWidth, 4);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_AttentionReference)->UseRealTime();

void BM_AttentionParallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto q = random_values(kRows * kWidth, 3);
    const auto k = random_values(kRows * kWidth, 4);
    const auto v = random_values(kRows * kWidth, 5);
    std::vector<double> out(kRows * kWidth), probs(64 * 4 * 12 * 12);
    for (auto _ : state) {
        cgf::kernels::attention_forward(q, k, v, out, probs, 64, 12, kWidth, 4);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_AttentionParallel)->Apply(matmul_args);

void BM_ModelForwardBatch(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const cgf::model::Model m(cgf::model::ModelConfig{});
    const auto x = random_values(256 * 12 * 5, 6);
    for (auto _ : state) benchmark::DoNotOptimize(m.forward_batch(x, 256));
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_ModelForwardBatch)->Apply(matmul_args);

}  // namespace

BENCHMARK_MAIN();
