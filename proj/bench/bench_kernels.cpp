#include <benchmark/benchmark.h>

#include "uavvln/eval.hpp"
#include "uavvln/planner.hpp"

using namespace uavvln;

namespace {

const world::Scene& warehouse() {
    static const auto scene = eval::generate_scene(world::Archetype::warehouse, 7);
    return scene;
}

const eval::Benchmark& suite() {
    static const std::vector<world::Archetype> archetypes = {world::Archetype::park, world::Archetype::office};
    static const auto bench = eval::make_benchmark(archetypes, 6, 7);
    return bench;
}

eval::RowConfig precise() {
    eval::RowConfig row;
    row.name = "precise";
    row.pipeline.profile = perception::profile_by_name("OPEN_VOCAB_PRECISE");
    return row;
}

void BM_RasterizeParallel(benchmark::State& state) {
    const double res = 1.0 / double(state.range(0));
    warehouse();
    for (auto _ : state) benchmark::DoNotOptimize(planner::rasterize(warehouse(), res, world::kDefaultClearance));
}

void BM_RasterizeSerial(benchmark::State& state) {
    const double res = 1.0 / double(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(planner::rasterize_reference(warehouse(), res, world::kDefaultClearance));
}

void BM_SuiteParallel(benchmark::State& state) {
    const auto row = precise();
    const auto& bench = suite();
    for (auto _ : state) benchmark::DoNotOptimize(eval::run_suite(bench, row));
}

void BM_SuiteSerial(benchmark::State& state) {
    const auto row = precise();
    const auto& bench = suite();
    for (auto _ : state) benchmark::DoNotOptimize(eval::run_suite_serial(bench, row));
}

} // namespace

BENCHMARK(BM_RasterizeParallel)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RasterizeSerial)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SuiteParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SuiteSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
