#include <benchmark/benchmark.h>

#include <vector>

#include "pamkit/metrics.hpp"
#include "pamkit/rng.hpp"

using namespace pamkit;

namespace {

// Tie-heavy scores: a coarse grid keeps the tie-handling paths hot.
std::vector<double> scores(int n, std::uint64_t seed) {
  Rng rng(SeedChain(seed).absorb("bench-metrics").value());
  std::vector<double> out(n);
  for (double& v : out) v = static_cast<double>(rng.next_below(257)) / 256.0;
  return out;
}

void BM_AucBinaryRank(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<double> pos = scores(n, 1);
  const std::vector<double> neg = scores(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auc_binary(pos, neg));
  }
  state.SetItemsProcessed(state.iterations() * 2 * n);
}
BENCHMARK(BM_AucBinaryRank)->Range(256, 65536);

void BM_AucBinaryBruteforce(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<double> pos = scores(n, 1);
  const std::vector<double> neg = scores(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auc_binary_bruteforce(pos, neg));
  }
}
BENCHMARK(BM_AucBinaryBruteforce)->Range(256, 4096);

}  // namespace

BENCHMARK_MAIN();
