#include <benchmark/benchmark.h>

#include "pamkit/audio.hpp"
#include "pamkit/frontend.hpp"

using namespace pamkit;

namespace {

Waveform bench_clip(int rate) { return synth_noise(42, 1.0, rate); }

MelConfig bench_mel(int rate) {
  MelConfig cfg;
  if (rate <= 16000) cfg.fmax_hz = 7200.0;
  return cfg;
}

void BM_StftPower(benchmark::State& state) {
  const int rate = static_cast<int>(state.range(0));
  const Waveform wave = bench_clip(rate);
  const MelConfig cfg = bench_mel(rate);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stft_power(wave, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(wave.samples.size()));
}
BENCHMARK(BM_StftPower)->Arg(16000)->Arg(32000);

void BM_MelProject(benchmark::State& state) {
  const int rate = static_cast<int>(state.range(0));
  const MelConfig cfg = bench_mel(rate);
  const PowerSpectrogram power = stft_power(bench_clip(rate), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mel_project(power, cfg, rate));
  }
}
BENCHMARK(BM_MelProject)->Arg(16000)->Arg(32000);

void BM_Pcen(benchmark::State& state) {
  const int rate = 32000;
  const MelConfig cfg = bench_mel(rate);
  const MelSpectrogram mel = mel_project(stft_power(bench_clip(rate), cfg), cfg, rate);
  const PcenConfig pcen_cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pcen(mel, pcen_cfg));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(mel.frames * mel.bands));
}
BENCHMARK(BM_Pcen);

void BM_FrontendGrid(benchmark::State& state) {
  const int rate = static_cast<int>(state.range(0));
  const Waveform wave = bench_clip(rate);
  FrontendConfig cfg;
  cfg.mel = bench_mel(rate);
  for (auto _ : state) {
    benchmark::DoNotOptimize(frontend_grid(wave, cfg));
  }
}
BENCHMARK(BM_FrontendGrid)->Arg(16000)->Arg(32000);

}  // namespace

BENCHMARK_MAIN();
