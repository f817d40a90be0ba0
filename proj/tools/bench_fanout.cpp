#include <benchmark/benchmark.h>

#include "fosl/locate.hpp"
#include "fosl/playback.hpp"
#include "fosl/simulate.hpp"

using namespace fosl;

namespace {

struct Fixture {
    sim::TestBench bench = sim::default_bench();
    sim::ScenarioResult run;
    pb::PlaybackResult playback;
    std::vector<std::size_t> hypotheses{0, 1, 2};
    std::vector<est::DseConfig> configs;

    explicit Fixture(double duration) {
        sim::FoInjection inj;
        inj.kind = sim::EfdModulation{};
        run = sim::run_scenario(bench, inj, duration);
        playback = pb::event_playback(bench.units, run.measured, bench.system_mva);
        for (auto h : hypotheses) {
            auto c = est::default_dse_config(bench.units[h], 10 * bench.ts);
            c.decimation = 10;
            configs.push_back(c);
        }
    }
};

const Fixture& fixture() {
    static const Fixture f(20.0);
    return f;
}

void fanout(benchmark::State& state, bool parallel) {
    const auto& f = fixture();
    for (auto _ : state) {
        auto r = pb::dse_fanout(f.bench.units, f.hypotheses, f.run.measured, f.bench.measured_branch, f.playback,
                                f.configs, parallel);
        benchmark::DoNotOptimize(r);
    }
}

void BM_FanoutSerial(benchmark::State& state) { fanout(state, false); }
void BM_FanoutParallel(benchmark::State& state) { fanout(state, true); }

void BM_Playback(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) {
        auto p = pb::event_playback(f.bench.units, f.run.measured, f.bench.system_mva);
        benchmark::DoNotOptimize(p);
    }
}

}  // namespace

BENCHMARK(BM_FanoutSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FanoutParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Playback)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
