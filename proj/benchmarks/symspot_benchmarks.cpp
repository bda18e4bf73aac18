#include <benchmark/benchmark.h>

#include "symspot/rng.hpp"
#include "symspot/synthetic.hpp"
#include "symspot/training.hpp"

using namespace symspot;

namespace {

DrawingRecord drawing(int rooms) {
  SyntheticSpec spec;
  spec.rooms_x_min = spec.rooms_x_max = rooms;
  spec.rooms_y_min = spec.rooms_y_max = rooms;
  return generate_drawing(11, 0, spec);
}

ModelConfig model(int stages, int width) {
  ModelConfig cfg;
  cfg.stages = stages;
  cfg.heads = 4;
  cfg.width = width;
  cfg.num_classes = 4;
  return cfg;
}

void BM_SegmentDistance(benchmark::State& state) {
  SplitMix64 rng(1);
  std::vector<ApproxSegment> segs;
  for (int i = 0; i < 256; ++i)
    segs.push_back({{rng.uniform(0, 5000), rng.uniform(0, 5000)},
                    {rng.uniform(0, 5000), rng.uniform(0, 5000)},
                    PrimitiveKind::Segment});
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_distance(segs[i % 256], segs[(i * 7 + 3) % 256]));
    ++i;
  }
}
BENCHMARK(BM_SegmentDistance);

void BM_BuildGraph(benchmark::State& state) {
  const auto rec = drawing(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(rec.primitives, GraphConfig{}));
  state.counters["vertices"] = static_cast<double>(rec.primitives.size());
}
BENCHMARK(BM_BuildGraph)->Arg(1)->Arg(3)->Arg(6);

void BM_Forward(benchmark::State& state) {
  const auto rec = drawing(2);
  const auto g = build_graph(rec.primitives, GraphConfig{});
  const auto cfg = model(static_cast<int>(state.range(0)), 128);
  const auto params = init_params(cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict(params, g, cfg, Ablation::full()));
  state.counters["edges"] = static_cast<double>(g.num_edges());
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto rec = drawing(2);
  const auto classes = ClassTable::synthetic(4);
  const auto ex = make_example(rec.id, build_graph(rec.primitives, GraphConfig{}), classes);
  const auto cfg = model(static_cast<int>(state.range(0)), 128);
  const auto params = init_params(cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(params, ex, cfg, Ablation::full(), 2.0));
}
BENCHMARK(BM_ForwardBackward)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
