#include <benchmark/benchmark.h>

#include <random>

#include "panoalign/graphopt.hpp"
#include "panoalign/metrics.hpp"
#include "panoalign/oracle.hpp"
#include "panoalign/resample.hpp"

using namespace panoalign;

namespace {

OptInputs box_inputs(int width) {
  SceneSpec s;
  s.camera = {0.6, -0.2, 0.8};
  s.erp_width = width;
  Corruption c;
  c.scales = {1.0, 1.2, 0.8, 1.1, 0.9, 1.05};
  return merged_oracle_inputs(s, CameraModel::cubemap(width / 4), c, 1);
}

void BM_Gradients(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  const OptConfig cfg;
  const Problem p = make_problem(box_inputs(w), cfg);
  const OptState s = OptState::from_inputs(p.inputs);
  for (auto _ : state) benchmark::DoNotOptimize(gradients(s, p, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(p.inputs.depth.size()));
}
BENCHMARK(BM_Gradients)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_BuildGraph(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  const OptConfig cfg;
  const OptInputs in = box_inputs(w);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(in.intensity, cfg));
}
BENCHMARK(BM_BuildGraph)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_MergeDepth(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  SceneSpec s;
  s.erp_width = w;
  const CorruptedFaces f = corrupt(s, CameraModel::cubemap(w / 4), Corruption{}, 0);
  for (auto _ : state) benchmark::DoNotOptimize(merge_depth_to_erp(f.depth, w));
}
BENCHMARK(BM_MergeDepth)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PointCloud a, b;
  for (long long i = 0; i < state.range(0); ++i) {
    a.points.emplace_back(u(rng), u(rng), u(rng));
    b.points.emplace_back(u(rng), u(rng), u(rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
