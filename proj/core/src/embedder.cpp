#include "pamkit/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pamkit/csv.hpp"
#include "pamkit/error.hpp"

namespace pamkit {
namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t take_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(std::string("cache: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t take_u64(std::ifstream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError(std::string("cache: truncated ") + what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

constexpr std::uint32_t kCacheMagic = 0x43454B50;  // "PKEC"
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

int EmbedderSpec::window_samples() const {
  return static_cast<int>(std::lround(window_len_s * input_rate));
}

void EmbedderSpec::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedder spec: dim must be >= 1");
  if (window_len_s <= 0.0) throw ConfigError("embedder spec: window length must be > 0");
  if (input_rate <= 0) throw ConfigError("embedder spec: input rate must be > 0");
  if (short_clip_policy == WindowPolicy::kSplitAndCollect) {
    throw ConfigError("embedder spec: short clip policy must pad, not split");
  }
}

EmbedderSpec vggish_spec() { return {"vggish", 16000, 0.96, 128, WindowPolicy::kZeroPadTail}; }
EmbedderSpec yamnet_spec() { return {"yamnet", 16000, 0.96, 1024, WindowPolicy::kZeroPadTail}; }
EmbedderSpec birdnet_spec() { return {"birdnet", 48000, 3.0, 1024, WindowPolicy::kZeroPadTail}; }
EmbedderSpec perch_spec() { return {"perch", 32000, 5.0, 1280, WindowPolicy::kZeroPadTail}; }
EmbedderSpec mock_spec(int embedding_dim) {
  return {"mock", 16000, 1.0, embedding_dim, WindowPolicy::kZeroPadTail};
}

MockEmbedder::MockEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  frontend_ = default_frontend();
  frontend_.mel.n_mels = 32;
  frontend_.mel.fmax_hz = std::min(frontend_.mel.fmax_hz, 0.45 * spec_.input_rate);
}

EmbeddingVector MockEmbedder::embed_window(const Waveform& window) const {
  if (window.sample_rate != spec_.input_rate) {
    throw ConfigError("mock embed: window rate " + std::to_string(window.sample_rate) +
                      " does not match spec rate " + std::to_string(spec_.input_rate));
  }
  const MelSpectrogram grid = frontend_grid(window, frontend_);

  // Per-band mean and population standard deviation over time.
  std::vector<double> features(2 * grid.bands, 0.0);
  for (std::size_t b = 0; b < grid.bands; ++b) {
    double sum = 0.0;
    for (std::size_t t = 0; t < grid.frames; ++t) sum += grid.at(t, b);
    const double mean = sum / static_cast<double>(grid.frames);
    double var = 0.0;
    for (std::size_t t = 0; t < grid.frames; ++t) {
      const double d = grid.at(t, b) - mean;
      var += d * d;
    }
    features[b] = mean;
    features[grid.bands + b] = std::sqrt(var / static_cast<double>(grid.frames));
  }

  std::vector<double> tiled(spec_.embedding_dim);
  for (int i = 0; i < spec_.embedding_dim; ++i) tiled[i] = features[i % features.size()];
  double norm_sq = 0.0;
  for (double v : tiled) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);

  EmbeddingVector out;
  out.spec_name = spec_.name;
  out.values.resize(spec_.embedding_dim);
  for (int i = 0; i < spec_.embedding_dim; ++i) {
    out.values[i] = static_cast<float>(norm > 0.0 ? tiled[i] / norm : 0.0);
  }
  return out;
}

EmbeddingStore::EmbeddingStore(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("embedding store: dim must be >= 1");
}

void EmbeddingStore::put(const std::string& clip_id, std::vector<float> values) {
  if (static_cast<int>(values.size()) != dim_) {
    throw ConfigError("embedding store: vector for '" + clip_id + "' has dim " +
                      std::to_string(values.size()) + ", store dim is " + std::to_string(dim_));
  }
  table_[clip_id] = std::move(values);
}

const std::vector<float>& EmbeddingStore::get(const std::string& clip_id) const {
  auto it = table_.find(clip_id);
  if (it == table_.end()) throw NotFoundError("embedding store: no entry for '" + clip_id + "'");
  return it->second;
}

std::vector<std::string> EmbeddingStore::ids() const {
  std::vector<std::string> out;
  out.reserve(table_.size());
  for (const auto& [id, _] : table_) out.push_back(id);
  return out;
}

void save_cache(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cache: cannot open " + path.string());
  put_u32(out, kCacheMagic);
  put_u32(out, kCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(store.dim()));
  put_u64(out, store.size());
  for (const std::string& id : store.ids()) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    const std::vector<float>& values = store.get(id);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * 4));
  }
  if (!out) throw IoError("cache: write failed for " + path.string());
}

EmbeddingStore load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cache: cannot open " + path.string());
  if (take_u32(in, "magic") != kCacheMagic) {
    throw FormatError("cache: bad magic in " + path.string());
  }
  const std::uint32_t version = take_u32(in, "version");
  if (version != kCacheVersion) {
    throw FormatError("cache: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = take_u32(in, "dim");
  const std::uint64_t count = take_u64(in, "count");
  EmbeddingStore store(static_cast<int>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t id_len = take_u32(in, "id length");
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    std::vector<float> values(dim);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(dim) * 4);
    if (!in) throw FormatError("cache: truncated record in " + path.string());
    store.put(id, std::move(values));
  }
  return store;
}

EmbeddingStore import_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("embedding csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("embedding csv: empty file " + path.string());
  const std::vector<std::string> header = csv_split(line);
  if (header.size() < 2 || header[0] != "clip_id") {
    throw FormatError("embedding csv: header must be clip_id,v0,...");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  EmbeddingStore store(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = csv_split(line);
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw FormatError("embedding csv: line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(dim + 1));
    }
    std::vector<float> values(dim);
    for (int i = 0; i < dim; ++i) {
      try {
        values[i] = std::stof(fields[i + 1]);
      } catch (const std::exception&) {
        throw FormatError("embedding csv: bad number at line " + std::to_string(line_no));
      }
    }
    store.put(fields[0], std::move(values));
  }
  return store;
}

CachedEmbedder::CachedEmbedder(EmbedderSpec spec, EmbeddingStore store)
    : spec_(std::move(spec)), store_(std::move(store)) {
  spec_.validate();
  if (store_.dim() != spec_.embedding_dim) {
    throw ConfigError("cached embedder: store dim " + std::to_string(store_.dim()) +
                      " does not match spec dim " + std::to_string(spec_.embedding_dim));
  }
}

EmbeddingVector CachedEmbedder::embed_window(const Waveform&) const {
  throw UnsupportedError("cached embedder: cannot embed raw audio; import embeddings instead");
}

std::optional<EmbeddingVector> CachedEmbedder::cached(const std::string& clip_id) const {
  if (!store_.contains(clip_id)) return std::nullopt;
  EmbeddingVector out;
  out.values = store_.get(clip_id);
  out.spec_name = spec_.name;
  out.clip_id = clip_id;
  return out;
}

EmbeddingVector embed_waveform(const Waveform& audio, const std::string& clip_id,
                               const EmbedderBackend& backend) {
  const EmbedderSpec& spec = backend.spec();
  spec.validate();
  const Waveform at_rate = resample(audio, spec.input_rate);
  const std::size_t target = static_cast<std::size_t>(spec.window_samples());

  std::vector<Waveform> windows;
  if (at_rate.samples.size() <= target) {
    windows = window_clip(at_rate, spec.short_clip_policy, spec.window_len_s, spec.input_rate);
  } else {
    windows = window_clip(at_rate, WindowPolicy::kSplitAndCollect, spec.window_len_s,
                          spec.input_rate);
  }

  std::vector<double> acc(spec.embedding_dim, 0.0);
  for (const Waveform& window : windows) {
    const EmbeddingVector e = backend.embed_window(window);
    if (static_cast<int>(e.values.size()) != spec.embedding_dim) {
      throw NumericError("embed '" + clip_id + "': backend returned dim " +
                         std::to_string(e.values.size()));
    }
    for (int i = 0; i < spec.embedding_dim; ++i) acc[i] += e.values[i];
  }

  EmbeddingVector out;
  out.spec_name = spec.name;
  out.clip_id = clip_id;
  out.values.resize(spec.embedding_dim);
  for (int i = 0; i < spec.embedding_dim; ++i) {
    out.values[i] = static_cast<float>(acc[i] / static_cast<double>(windows.size()));
    if (!std::isfinite(out.values[i])) {
      throw NumericError("embed '" + clip_id + "': non-finite embedding value");
    }
  }
  return out;
}

EmbeddingVector embed_clip(const LabeledClip& clip, const EmbedderBackend& backend,
                           const AudioLoader& loader) {
  if (auto hit = backend.cached(clip.clip_id)) {
    if (static_cast<int>(hit->values.size()) != backend.spec().embedding_dim) {
      throw NumericError("embed '" + clip.clip_id + "': cached dim mismatch");
    }
    return *hit;
  }
  if (!backend.audio_capable()) {
    throw NotFoundError("embed '" + clip.clip_id + "': not present in the embedding cache");
  }
  try {
    return embed_waveform(loader(clip.path), clip.clip_id, backend);
  } catch (const IoError& e) {
    throw IoError("embed '" + clip.clip_id + "': " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("embed '" + clip.clip_id + "': " + e.what());
  }
}

}  // namespace pamkit
