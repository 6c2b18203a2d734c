#include <benchmark/benchmark.h>

#include "pamkit/audio.hpp"

using namespace pamkit;

namespace {

void BM_Downsample32kTo16k(benchmark::State& state) {
  const double seconds = static_cast<double>(state.range(0));
  const Waveform wave = synth_noise(7, seconds, 32000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(resample(wave, 16000));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(wave.samples.size()));
}
BENCHMARK(BM_Downsample32kTo16k)->Arg(1)->Arg(10);

void BM_Upsample16kTo32k(benchmark::State& state) {
  const Waveform wave = synth_noise(7, 1.0, 16000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(resample(wave, 32000));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(wave.samples.size()));
}
BENCHMARK(BM_Upsample16kTo32k);

void BM_ResampleTaps(benchmark::State& state) {
  const Waveform wave = synth_noise(7, 1.0, 32000);
  ResampleConfig cfg;
  cfg.taps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(resample(wave, 16000, cfg));
  }
}
BENCHMARK(BM_ResampleTaps)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
