#include "pamkit/bench.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pamkit/csv.hpp"
#include "pamkit/error.hpp"

namespace pamkit {
namespace {

struct CellOutcome {
  double wall_s = 0.0;
  bool failed = false;
  std::string fail_reason;
};

CellOutcome run_cell(const EmbedderBackend& backend, const std::vector<Waveform>& windows,
                     int batch, int workers) {
  std::atomic<std::size_t> next{0};
  std::mutex fail_mutex;
  bool failed = false;
  std::string fail_reason;

  auto work = [&]() {
    try {
      while (true) {
        const std::size_t begin = next.fetch_add(static_cast<std::size_t>(batch));
        if (begin >= windows.size()) return;
        const std::size_t end =
            std::min(windows.size(), begin + static_cast<std::size_t>(batch));
        for (std::size_t i = begin; i < end; ++i) {
          (void)backend.embed_window(windows[i]);
        }
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(fail_mutex);
      if (!failed) {
        failed = true;
        fail_reason = e.what();
      }
    }
  };

  const auto start = std::chrono::steady_clock::now();
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  const auto stop = std::chrono::steady_clock::now();

  CellOutcome outcome;
  outcome.wall_s = std::chrono::duration<double>(stop - start).count();
  outcome.failed = failed;
  outcome.fail_reason = std::move(fail_reason);
  return outcome;
}

}  // namespace

void BenchConfig::validate() const {
  if (duration_s <= 0.0) throw ConfigError("bench: duration must be > 0");
  if (rate < 1) throw ConfigError("bench: rate must be >= 1");
  if (batch_grid.empty()) throw ConfigError("bench: batch grid must be nonempty");
  if (worker_grid.empty()) throw ConfigError("bench: worker grid must be nonempty");
  for (int b : batch_grid) {
    if (b < 1) throw ConfigError("bench: batch sizes must be >= 1");
  }
  for (int w : worker_grid) {
    if (w < 1) throw ConfigError("bench: worker counts must be >= 1");
  }
}

const BenchCell& BenchResult::best() const {
  if (best_index < 0 || best_index >= static_cast<int>(cells.size())) {
    throw NotFoundError("bench: no successful cell");
  }
  return cells[static_cast<std::size_t>(best_index)];
}

BenchResult bench_inference(const EmbedderBackend& backend, const BenchConfig& config) {
  config.validate();
  const EmbedderSpec spec = backend.spec();
  spec.validate();

  Waveform audio = synth_noise(config.seed, config.duration_s, config.rate);
  if (audio.sample_rate != spec.input_rate) audio = resample(audio, spec.input_rate);

  const int window = spec.window_samples();
  const std::size_t count =
      (audio.samples.size() + static_cast<std::size_t>(window) - 1) /
      static_cast<std::size_t>(window);
  std::vector<Waveform> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Waveform segment;
    segment.sample_rate = spec.input_rate;
    segment.samples.assign(static_cast<std::size_t>(window), 0.0f);
    const std::size_t begin = w * static_cast<std::size_t>(window);
    const std::size_t len =
        std::min(static_cast<std::size_t>(window), audio.samples.size() - begin);
    std::copy_n(audio.samples.begin() + static_cast<std::ptrdiff_t>(begin), len,
                segment.samples.begin());
    windows.push_back(std::move(segment));
  }
  audio.samples.clear();
  audio.samples.shrink_to_fit();

  BenchResult result;
  result.backend = spec.name;
  result.audio_s = config.duration_s;
  for (int batch : config.batch_grid) {
    for (int workers : config.worker_grid) {
      BenchCell cell;
      cell.batch = batch;
      cell.workers = workers;
      const CellOutcome outcome = run_cell(backend, windows, batch, workers);
      cell.wall_s = outcome.wall_s;
      cell.failed = outcome.failed;
      cell.fail_reason = outcome.fail_reason;
      if (!cell.failed) {
        if (cell.wall_s <= 0.0) {
          cell.failed = true;
          cell.fail_reason = "wall time was not positive";
        } else {
          cell.rtf = result.audio_s / cell.wall_s;
        }
      }
      if (!cell.failed &&
          (result.best_index < 0 ||
           cell.rtf > result.cells[static_cast<std::size_t>(result.best_index)].rtf)) {
        result.best_index = static_cast<int>(result.cells.size());
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

void write_bench_csv(const BenchResult& result, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "batch,workers,wall_s,rtf,failed,fail_reason\n";
  for (const BenchCell& cell : result.cells) {
    out << cell.batch << ',' << cell.workers << ',' << csv_double(cell.wall_s) << ','
        << csv_double(cell.rtf) << ',' << (cell.failed ? "true" : "false") << ','
        << csv_escape(cell.fail_reason) << '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << out.str();
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace pamkit
