#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pamkit/embedder.hpp"

namespace pamkit {

struct BenchConfig {
  double duration_s = 3600.0;
  int rate = 32000;
  std::vector<int> batch_grid = {8, 16, 32, 64, 128};
  std::vector<int> worker_grid = {1, 4, 8, 12, 16};
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchCell {
  int batch = 0;
  int workers = 0;
  double wall_s = 0.0;
  double rtf = 0.0;
  bool failed = false;
  std::string fail_reason;
};

struct BenchResult {
  std::string backend;
  double audio_s = 0.0;
  std::vector<BenchCell> cells;
  int best_index = -1;  // highest-RTF cell; -1 when every cell failed

  const BenchCell& best() const;
};

/// Inference throughput sweep. Synthesizes `duration_s` of seeded noise once,
/// resamples it to the backend rate and chops it into window-length segments
/// up front, then times each (batch, workers) cell embedding every segment.
/// The timed region covers embedding only; synthesis, resampling, and
/// chopping stay outside it. A failing cell is marked and the sweep
/// continues. RTF = audio seconds / wall seconds.
BenchResult bench_inference(const EmbedderBackend& backend, const BenchConfig& config = {});

/// Cells as CSV with columns batch,workers,wall_s,rtf,failed,fail_reason.
void write_bench_csv(const BenchResult& result, const std::filesystem::path& path);

}  // namespace pamkit
