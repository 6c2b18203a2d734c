#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace pamkit {

/// Mono waveform with amplitudes in [-1, 1]. Immutable by convention once
/// built; every producer goes through validate() so non-finite or clipped
/// samples are rejected at construction time.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  /// Throws ConfigError if the rate is not positive or any sample is
  /// non-finite or outside [-1, 1].
  static Waveform create(std::vector<float> samples, int sample_rate);
};

/// Reads a PCM 16-bit mono or stereo WAV file. Stereo is averaged to mono;
/// int16 values are scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);

/// Writes a PCM 16-bit mono WAV file (44-byte canonical header). Samples are
/// quantized with round(x * 32768) and saturated to the int16 range.
void write_wav(const Waveform& wave, const std::filesystem::path& path);

struct ResampleConfig {
  /// Kernel length counted at the lower of the two rates. The kernel is a
  /// Kaiser-windowed sinc; beta 6.76 gives ~70 dB stopband attenuation.
  int taps = 64;
  double kaiser_beta = 6.76;
};

/// Band-limited sample rate conversion with a windowed-sinc (polyphase
/// evaluation) kernel. Same-rate input is returned unchanged. Output length
/// is round(n * target / source).
Waveform resample(const Waveform& wave, int target_rate,
                  const ResampleConfig& cfg = {});

enum class SynthKind { kSilence, kSine, kNoise };

struct SynthSpec {
  SynthKind kind = SynthKind::kSilence;
  double frequency_hz = 440.0;   // sine only
  std::uint64_t seed = 0;        // noise only
};

/// Deterministic test-signal generator: silence, unit-amplitude sine, or
/// seeded uniform noise in [-1, 1).
Waveform synth(const SynthSpec& spec, double duration_s, int sample_rate);

inline Waveform synth_silence(double duration_s, int rate) {
  return synth({SynthKind::kSilence}, duration_s, rate);
}
inline Waveform synth_sine(double freq_hz, double duration_s, int rate) {
  return synth({SynthKind::kSine, freq_hz, 0}, duration_s, rate);
}
inline Waveform synth_noise(std::uint64_t seed, double duration_s, int rate) {
  return synth({SynthKind::kNoise, 0.0, seed}, duration_s, rate);
}

/// Maps a clip's path string to its waveform. The corpus layer stores paths
/// opaquely; embedding and pretraining take a loader so tests and tools can
/// decide how audio is materialized.
using AudioLoader = std::function<Waveform(const std::string&)>;

/// Loader reading WAV files, resolving relative paths against `root`.
AudioLoader file_loader(const std::filesystem::path& root = {});

/// Thread-safe memoizing wrapper; useful when pretraining revisits clips.
AudioLoader memoized_loader(AudioLoader inner);

}  // namespace pamkit
