#include <benchmark/benchmark.h>

#include "davss/rng.hpp"
#include "davss/segmodel.hpp"

using namespace davss;

namespace {

Frame random_frame(int h, int w, std::uint64_t seed) {
    auto rng = make_rng(seed, 0);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Frame f(h, w, 3);
    for (auto& v : f.data) v = dist(rng);
    return f;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    ModelParams params = init_params(8, 16, 1);
    Frame a = random_frame(n, n, 2), b = random_frame(n, n, 3);
    FlowField flow(n, n);
    for (auto _ : state) {
        ForwardTrace t = forward(params, a, b, flow);
        benchmark::DoNotOptimize(t.fused.data.data());
    }
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64);

static void BM_ForwardBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    ModelParams params = init_params(8, 16, 1);
    Frame a = random_frame(n, n, 2), b = random_frame(n, n, 3);
    FlowField flow(n, n);
    LabelMap label(n, n, 8);
    auto rng = make_rng(4, 4);
    for (auto& v : label.data) v = static_cast<std::uint8_t>(rng() % 8);
    for (auto _ : state) {
        ForwardTrace t = forward(params, a, b, flow);
        CrossEntropyResult ce = cross_entropy_loss(t.fused, label);
        ModelParams grads = zeros_like(params);
        backward(params, t, ce.grad, nullptr, grads);
        benchmark::DoNotOptimize(grads.conv1.weights.data());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
