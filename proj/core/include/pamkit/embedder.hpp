#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pamkit/audio.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/frontend.hpp"

namespace pamkit {

/// Input contract of one embedding backend. Clips shorter than the window
/// are padded per short_clip_policy into a single window; longer clips are
/// split into non-overlapping windows whose embeddings are averaged.
struct EmbedderSpec {
  std::string name = "mock";
  int input_rate = 16000;
  double window_len_s = 1.0;
  int embedding_dim = 128;
  WindowPolicy short_clip_policy = WindowPolicy::kZeroPadTail;

  int window_samples() const;
  void validate() const;
};

EmbedderSpec vggish_spec();
EmbedderSpec yamnet_spec();
EmbedderSpec birdnet_spec();
EmbedderSpec perch_spec();
EmbedderSpec mock_spec(int embedding_dim = 128);

struct EmbeddingVector {
  std::vector<float> values;
  std::string spec_name;
  std::string clip_id;
};

class EmbedderBackend {
 public:
  virtual ~EmbedderBackend() = default;
  virtual const EmbedderSpec& spec() const = 0;

  /// Embeds one window of exactly spec().window_samples() samples at
  /// spec().input_rate.
  virtual EmbeddingVector embed_window(const Waveform& window) const = 0;

  /// Precomputed embedding for a clip id, if this backend carries one.
  /// Backends that compute from audio return nullopt.
  virtual std::optional<EmbeddingVector> cached(const std::string& clip_id) const {
    return std::nullopt;
  }

  /// False for lookup-only backends that cannot process raw audio.
  virtual bool audio_capable() const { return true; }
};

/// Deterministic audio-derived test backend: per-mel-band mean and standard
/// deviation of the window's PCEN grid, tiled or truncated to the embedding
/// dimension, then L2-normalized (skipped when the norm is zero).
class MockEmbedder : public EmbedderBackend {
 public:
  explicit MockEmbedder(EmbedderSpec spec = mock_spec());

  const EmbedderSpec& spec() const override { return spec_; }
  EmbeddingVector embed_window(const Waveform& window) const override;

 private:
  EmbedderSpec spec_;
  FrontendConfig frontend_;
};

/// In-memory embedding table with a fixed dimension. Ids iterate in sorted
/// order so serialization is deterministic. One writer or many concurrent
/// readers, never both.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }
  bool contains(const std::string& clip_id) const { return table_.count(clip_id) != 0; }

  /// Throws ConfigError when the vector length differs from the store dim.
  void put(const std::string& clip_id, std::vector<float> values);
  /// Throws NotFoundError for absent ids.
  const std::vector<float>& get(const std::string& clip_id) const;

  std::vector<std::string> ids() const;

 private:
  int dim_;
  std::map<std::string, std::vector<float>> table_;
};

/// Little-endian cache file: u32 magic "PKEC", u32 version, u32 dim,
/// u64 count, then per record u32 id length, id bytes, dim f32 values.
void save_cache(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_cache(const std::filesystem::path& path);

/// CSV import with columns clip_id,v0..v{d-1}; the dimension is taken from
/// the header row.
EmbeddingStore import_embeddings_csv(const std::filesystem::path& path);

/// File-backed backend serving precomputed vectors by clip id; used to plug
/// externally computed embeddings (BirdNET, Perch, ...) into the protocol.
/// It cannot embed raw audio.
class CachedEmbedder : public EmbedderBackend {
 public:
  CachedEmbedder(EmbedderSpec spec, EmbeddingStore store);

  const EmbedderSpec& spec() const override { return spec_; }
  EmbeddingVector embed_window(const Waveform& window) const override;
  std::optional<EmbeddingVector> cached(const std::string& clip_id) const override;
  bool audio_capable() const override { return false; }

 private:
  EmbedderSpec spec_;
  EmbeddingStore store_;
};

/// Full input adaptation: cached lookup if the backend has one, else load
/// audio, resample to the spec rate, pad or split into windows, embed each
/// window, and mean the results elementwise (f64 accumulation).
EmbeddingVector embed_clip(const LabeledClip& clip, const EmbedderBackend& backend,
                           const AudioLoader& loader);

/// Same pipeline for audio already in hand.
EmbeddingVector embed_waveform(const Waveform& audio, const std::string& clip_id,
                               const EmbedderBackend& backend);

}  // namespace pamkit
