// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "apot/analysis.hpp"
#include "apot/levels.hpp"
#include "apot/reference.hpp"
#include "apot/shiftadd.hpp"

using namespace apot;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

struct MatvecInput {
  LevelSet ls = build_apot(1.0, 5, 2, true);
  std::size_t rows = 256;
  std::size_t cols = 1024;
  std::vector<std::uint32_t> w;
  std::vector<std::uint64_t> x;

  MatvecInput() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::uint32_t> wi(0, static_cast<std::uint32_t>(ls.size() - 1));
    std::uniform_int_distribution<std::uint64_t> xi(0, 255);
    w.resize(rows * cols);
    x.resize(cols);
    for (auto& v : w) v = wi(rng);
    for (auto& v : x) v = xi(rng);
  }
};

void BM_ProjectParallel(benchmark::State& state) {
  const LevelSet ls = build_apot(1.0, 8, 2, true);
  const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 1);
  std::vector<std::uint32_t> out(x.size());
  for (auto _ : state) {
    project_indices(x, ls, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ProjectReference(benchmark::State& state) {
  const LevelSet ls = build_apot(1.0, 8, 2, true);
  const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::project_indices(x, ls));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MatvecParallel(benchmark::State& state) {
  const MatvecInput in;
  for (auto _ : state) {
    benchmark::DoNotOptimize(shiftadd_matvec(in.w, in.rows, in.cols, in.ls, in.x, 8));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.w.size()));
}

void BM_MatvecReference(benchmark::State& state) {
  const MatvecInput in;
  for (auto _ : state) benchmark::DoNotOptimize(reference::matvec(in.w, in.rows, in.cols, in.ls, in.x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.w.size()));
}

void BM_QemParallel(benchmark::State& state) {
  const auto w = gaussian(20000, 2);
  const LevelSet unit = build_apot(1.0, 5, 2, true);
  const auto grid = default_alpha_grid(w, 128);
  for (auto _ : state) benchmark::DoNotOptimize(qem_search(w, unit, grid).best_alpha);
}

void BM_QemReference(benchmark::State& state) {
  const auto w = gaussian(20000, 2);
  const LevelSet unit = build_apot(1.0, 5, 2, true);
  const auto grid = default_alpha_grid(w, 128);
  for (auto _ : state) benchmark::DoNotOptimize(reference::qem_curve(w, unit, grid));
}

}  // namespace

BENCHMARK(BM_ProjectParallel)->Arg(1 << 16);
BENCHMARK(BM_ProjectReference)->Arg(1 << 16);
BENCHMARK(BM_MatvecParallel);
BENCHMARK(BM_MatvecReference);
BENCHMARK(BM_QemParallel);
BENCHMARK(BM_QemReference);

BENCHMARK_MAIN();
