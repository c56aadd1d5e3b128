#include <benchmark/benchmark.h>

#include "davss/flowops.hpp"
#include "davss/rng.hpp"

using namespace davss;

static void BM_WarpBilinear(benchmark::State& state) {
    const int n = 64, d = static_cast<int>(state.range(0));
    auto rng = make_rng(9, 0);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    FeatureMap f(n, n, d);
    for (auto& v : f.data) v = dist(rng);
    FlowField flow(n, n);
    for (auto& v : flow.data) v = dist(rng);
    for (auto _ : state) {
        WarpedFeatures w = warp_backward_bilinear(f, flow);
        benchmark::DoNotOptimize(w.warped.data.data());
    }
}
BENCHMARK(BM_WarpBilinear)->Arg(8)->Arg(16);

static void BM_SplitInstances(benchmark::State& state) {
    auto rng = make_rng(10, 0);
    BinaryMap mask(64, 64);
    for (auto& v : mask.data) v = rng() % 3 == 0;
    for (auto _ : state) {
        auto parts = split_instances(mask, ClassCategory::Thing);
        benchmark::DoNotOptimize(parts.data());
    }
}
BENCHMARK(BM_SplitInstances);

static void BM_FlowViolationRate(benchmark::State& state) {
    auto rng = make_rng(11, 0);
    LabelMap prev(64, 64, 8), cur(64, 64, 8);
    for (auto& v : prev.data) v = static_cast<std::uint8_t>(rng() % 8);
    for (auto& v : cur.data) v = static_cast<std::uint8_t>(rng() % 8);
    FlowField flow(64, 64);
    for (auto& v : flow.data) v = static_cast<double>(static_cast<int>(rng() % 5)) - 2.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_violation_rate(prev, cur, flow));
    }
}
BENCHMARK(BM_FlowViolationRate);
