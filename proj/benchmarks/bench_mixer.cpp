#include <benchmark/benchmark.h>

#include "davss/mixer.hpp"
#include "davss/rng.hpp"

using namespace davss;

namespace {

struct MixInputs {
    Frame sf_prev{64, 64, 3}, sf_cur{64, 64, 3}, tf_prev{64, 64, 3}, tf_cur{64, 64, 3};
    LabelMap sl_prev{64, 64, 8}, sl_cur{64, 64, 8}, pseudo{64, 64, 8};
    FlowField s_flow{64, 64}, t_flow{64, 64};

    MixInputs() {
        auto rng = make_rng(7, 0);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        for (auto* f : {&sf_prev, &sf_cur, &tf_prev, &tf_cur}) {
            for (auto& v : f->data) v = dist(rng);
        }
        for (auto* l : {&sl_prev, &sl_cur, &pseudo}) {
            for (auto& v : l->data) v = static_cast<std::uint8_t>(rng() % 8);
        }
    }
};

}  // namespace

// The per-iteration cost CMOM adds on top of a plain self-training step.
static void BM_MixCmom(benchmark::State& state) {
    MixInputs in;
    MixConfig cfg;
    cfg.class_ratio = 0.75;
    SourceWindow src{&in.sf_prev, &in.sf_cur, &in.sl_prev, &in.sl_cur, &in.s_flow};
    TargetWindow tgt{&in.tf_prev, &in.tf_cur, &in.t_flow};
    std::uint64_t draw = 0;
    for (auto _ : state) {
        MixResult r = mix_cmom(src, tgt, in.pseudo, cfg, draw++);
        benchmark::DoNotOptimize(r.mixed_frame_cur.data.data());
    }
}
BENCHMARK(BM_MixCmom);

static void BM_MixDacs(benchmark::State& state) {
    MixInputs in;
    MixConfig cfg;
    cfg.class_ratio = 0.75;
    std::uint64_t draw = 0;
    for (auto _ : state) {
        DacsResult r = mix_dacs(in.sf_cur, in.tf_cur, in.sl_cur, in.pseudo, cfg, draw++);
        benchmark::DoNotOptimize(r.mixed_frame.data.data());
    }
}
BENCHMARK(BM_MixDacs);

static void BM_SelectClasses(benchmark::State& state) {
    MixInputs in;
    MixConfig cfg;
    cfg.class_ratio = 0.75;
    std::uint64_t draw = 0;
    for (auto _ : state) {
        auto sel = select_classes(in.sl_cur, cfg, draw++);
        benchmark::DoNotOptimize(sel.data());
    }
}
BENCHMARK(BM_SelectClasses);
