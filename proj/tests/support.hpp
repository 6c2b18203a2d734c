#pragma once

// Shared fixtures: RAII temp directories and synthetic tone corpora written
// as real WAV files, so every test exercises the same audio path as the CLI.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "pamkit/audio.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/rng.hpp"

namespace testsup {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    pamkit::Rng rng(pamkit::SeedChain(0x7e57d14).absorb(tag).absorb(counter()++).value());
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto candidate = base / (tag + "-" + std::to_string(rng.next_u64() & 0xffffff));
      std::error_code ec;
      if (std::filesystem::create_directories(candidate, ec)) {
        dir_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create a fresh directory under " +
                             base.string());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path dir_;
};

struct ToneClass {
  std::string name;
  double freq_hz = 440.0;
  pamkit::PrimaryLabel primary = pamkit::PrimaryLabel::kBiophony;
};

struct ToneDataset {
  std::string id;
  std::vector<ToneClass> classes;
  int clips_per_class = 16;
  double detune = 1.0;      // per-domain frequency factor
  double tone_amp = 0.5;
  double noise_amp = 0.05;  // per-domain floor, uniform white
  int ambient_clips = 0;    // extra noise-only clips labeled ambient
};

inline pamkit::Waveform tone_clip(double freq_hz, double tone_amp, double noise_amp,
                                  double seconds, int rate, pamkit::Rng& rng) {
  std::vector<float> samples(static_cast<std::size_t>(seconds * rate));
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double s = noise_amp * rng.uniform(-1.0, 1.0);
    if (tone_amp > 0.0) {
      s += tone_amp * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) /
                                   static_cast<double>(rate) +
                               phase);
    }
    samples[i] = static_cast<float>(s);
  }
  return pamkit::Waveform::create(std::move(samples), rate);
}

/// Writes one WAV per clip under root/<dataset id>/ and returns the filled
/// registry; paths are stored relative to root. A manifest JSON is saved at
/// root/manifest.json.
inline pamkit::DatasetRegistry build_tone_corpus(const std::filesystem::path& root,
                                                 const std::vector<ToneDataset>& specs,
                                                 int rate = 16000, double seconds = 1.0,
                                                 std::uint64_t seed = 0) {
  pamkit::DatasetRegistry registry;
  for (const ToneDataset& spec : specs) {
    std::filesystem::create_directories(root / spec.id);
    std::vector<pamkit::LabeledClip> clips;
    pamkit::Rng rng(pamkit::SeedChain(seed).absorb("corpus").absorb(spec.id).value());
    for (const ToneClass& cls : spec.classes) {
      for (int n = 0; n < spec.clips_per_class; ++n) {
        pamkit::LabeledClip clip;
        clip.dataset_id = spec.id;
        clip.clip_id = spec.id + "-" + cls.name + "-" + std::to_string(n);
        clip.primary = cls.primary;
        clip.secondary = cls.name;
        clip.path = spec.id + "/" + clip.clip_id + ".wav";
        pamkit::write_wav(tone_clip(cls.freq_hz * spec.detune, spec.tone_amp, spec.noise_amp,
                                    seconds, rate, rng),
                          root / clip.path);
        clips.push_back(std::move(clip));
      }
    }
    for (int n = 0; n < spec.ambient_clips; ++n) {
      pamkit::LabeledClip clip;
      clip.dataset_id = spec.id;
      clip.clip_id = spec.id + "-ambient-" + std::to_string(n);
      clip.primary = pamkit::PrimaryLabel::kAmbient;
      clip.path = spec.id + "/" + clip.clip_id + ".wav";
      pamkit::write_wav(tone_clip(0.0, 0.0, spec.noise_amp, seconds, rate, rng),
                        root / clip.path);
      clips.push_back(std::move(clip));
    }
    registry.add_dataset(spec.id, std::move(clips));
  }
  pamkit::save_manifest(registry, root / "manifest.json");
  return registry;
}

/// Four domains over a shared pool of four tones; each domain carries three
/// of them, so every holdout class also lives in at least two training
/// domains. Domains differ by detune and noise floor.
inline std::vector<ToneDataset> dreg_corpus_spec(int clips_per_class, int ambient_clips = 0) {
  const std::vector<ToneClass> pool = {
      {"t320", 320.0},
      {"t700", 700.0},
      {"t1400", 1400.0},
      {"t2700", 2700.0},
  };
  std::vector<ToneDataset> specs;
  for (int d = 0; d < 4; ++d) {
    ToneDataset spec;
    spec.id = "dom" + std::to_string(d);
    for (int c = 0; c < 3; ++c) spec.classes.push_back(pool[(d + c) % pool.size()]);
    spec.clips_per_class = clips_per_class;
    spec.detune = 1.0 + 0.015 * d;
    spec.noise_amp = 0.03 + 0.02 * d;
    spec.ambient_clips = ambient_clips;
    specs.push_back(std::move(spec));
  }
  return specs;
}

}  // namespace testsup
