// Serial references against their OpenMP counterparts. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "trailmap/eval.hpp"
#include "trailmap/nn_kernels.hpp"
#include "trailmap/raster.hpp"
#include "trailmap/raster_kernels.hpp"
#include "trailmap/rng.hpp"
#include "trailmap/synth.hpp"

using namespace trailmap;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

using Gemm = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

void run_gemm(benchmark::State& state, Gemm f) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    f(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_gemm_nn_reference(benchmark::State& s) { run_gemm(s, kernels::gemm_nn_reference); }
void BM_gemm_nn(benchmark::State& s) { run_gemm(s, kernels::gemm_nn); }
void BM_gemm_nt_reference(benchmark::State& s) { run_gemm(s, kernels::gemm_nt_reference); }
void BM_gemm_nt(benchmark::State& s) { run_gemm(s, kernels::gemm_nt); }
void BM_gemm_tn_reference(benchmark::State& s) { run_gemm(s, kernels::gemm_tn_reference); }
void BM_gemm_tn(benchmark::State& s) { run_gemm(s, kernels::gemm_tn); }
BENCHMARK(BM_gemm_nn_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nn)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nt_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nt)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn)->Arg(64)->Arg(256);

using Convolve = void (*)(std::span<double>, int, int, int, std::span<const double>);

void run_convolve(benchmark::State& state, Convolve f) {
  const int w = static_cast<int>(state.range(0));
  const int c = 7;
  const auto base = random_values(static_cast<std::size_t>(w * w * c), 3);
  const auto taps = kernels::gaussian_taps(2.0);
  std::vector<double> data;
  for (auto _ : state) {
    data = base;
    f(data, w, w, c, taps);
    benchmark::DoNotOptimize(data.data());
  }
}

void BM_convolve_reference(benchmark::State& s) { run_convolve(s, kernels::separable_convolve_reference); }
void BM_convolve(benchmark::State& s) { run_convolve(s, kernels::separable_convolve); }
BENCHMARK(BM_convolve_reference)->Arg(60)->Arg(240);
BENCHMARK(BM_convolve)->Arg(60)->Arg(240);

// Rasterize plus smooth of one crossroads tile at the default 0.25 m cells.
void run_tile(benchmark::State& state, bool parallel) {
  ScenarioSpec s;
  s.seed = 4;
  const auto trails = generate(s).trails;
  GridSpec spec;
  const GridTile raw = rasterize(spec, trails);
  for (auto _ : state) {
    GridTile out = parallel ? gaussian_smooth(raw, 2.0) : gaussian_smooth_reference(raw, 2.0);
    benchmark::DoNotOptimize(out.dir.data());
  }
}

void BM_smooth_tile_reference(benchmark::State& s) { run_tile(s, false); }
void BM_smooth_tile(benchmark::State& s) { run_tile(s, true); }
BENCHMARK(BM_smooth_tile_reference);
BENCHMARK(BM_smooth_tile);

void BM_footprint(benchmark::State& state) {
  for (auto _ : state) {
    auto cells = kernels::footprint_cells({3.2, 7.9}, {200.5, 150.1}, 3.6, 240, 240);
    benchmark::DoNotOptimize(cells.data());
  }
}
BENCHMARK(BM_footprint);

}  // namespace

BENCHMARK_MAIN();
