#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "pamkit/audio.hpp"

namespace pamkit {

/// STFT + mel filterbank parameters. Frequencies in Hz, times in seconds.
/// Frames use a periodic Hann window; FFT size is the next power of two at
/// or above the frame length.
struct MelConfig {
  double frame_length_s = 0.025;
  double hop_length_s = 0.010;
  int n_mels = 128;
  double fmin_hz = 60.0;
  double fmax_hz = 10000.0;

  int frame_samples(int rate) const;
  int hop_samples(int rate) const;
  int fft_size(int rate) const;

  /// Throws ConfigError unless 0 < fmin < fmax <= rate/2, n_mels >= 1 and
  /// 0 < hop <= frame.
  void validate(int rate) const;
};

/// Per-channel energy normalization parameters.
///   M(t,f) = (1-s)*M(t-1,f) + s*E(t,f)
///   out(t,f) = (E(t,f) / (eps + M(t,f))^g + d)^r - d^r
struct PcenConfig {
  double smoothing = 0.1;   // s
  double gain = 0.5;        // g
  double bias = 2.0;        // d
  double root = 2.0;        // r
  double epsilon = 1e-6;
  bool spectral_pcen = false;  // accepted in configs, not implemented
  /// Smoother start: M(0,f) = E(0,f) by default; setting this uses M(0,f)=0,
  /// which matches the closed-form transient M(t) = 1-(1-s)^t for E=1.
  bool zero_initial_state = false;

  void validate() const;
};

/// Bundled frontend presets.
struct FrontendConfig {
  MelConfig mel;
  PcenConfig pcen;
  /// Optional log(1+x) compression applied to mel energies before PCEN.
  bool log_before_pcen = false;
};

/// Preset matching the default deployment (60-10000 Hz, s=0.1, g=0.5,
/// d=2.0, r=2.0, eps=1e-6).
FrontendConfig default_frontend();

/// Preset matching the SurfPerch release (50-16000 Hz, s=0.145, g=0.8,
/// d=10.0, r=4.0).
FrontendConfig surfperch_frontend();

/// Time x frequency-bin power grid (|FFT|^2 of Hann-windowed frames).
struct PowerSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;  // row-major frames x bins

  double& at(std::size_t t, std::size_t b) { return values[t * bins + b]; }
  double at(std::size_t t, std::size_t b) const { return values[t * bins + b]; }
};

/// Time x mel-band grid. Nonnegative energies before PCEN; real values after.
struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<double> values;  // row-major frames x bands
  double frame_length_s = 0.0;
  double hop_length_s = 0.0;

  double& at(std::size_t t, std::size_t b) { return values[t * bands + b]; }
  double at(std::size_t t, std::size_t b) const { return values[t * bands + b]; }
};

/// Hann-windowed short-time power spectrum. Throws InsufficientSamplesError
/// when the wave is shorter than one frame. Frame count is
/// floor((n - frame) / hop) + 1.
PowerSpectrogram stft_power(const Waveform& wave, const MelConfig& cfg);

/// Projects a power grid through a triangular mel filterbank. Filters are
/// equally spaced on the HTK mel scale between fmin and fmax; the triangle is
/// averaged over each FFT bin cell so narrow low-frequency filters still get
/// positive weight. Within [fmin, fmax] the filters sum to one per bin up to
/// the boundary taper.
MelSpectrogram mel_project(const PowerSpectrogram& power, const MelConfig& cfg, int rate);

/// Per-band PCEN recurrence over time (see PcenConfig). Requires mel values
/// to be nonnegative and finite.
MelSpectrogram pcen(const MelSpectrogram& mel, const PcenConfig& cfg);

/// Elementwise log(1 + x) compression.
MelSpectrogram log_compress(const MelSpectrogram& mel);

/// Full frontend: STFT -> mel -> (optional log1p) -> PCEN.
MelSpectrogram frontend_grid(const Waveform& wave, const FrontendConfig& cfg);

enum class WindowPolicy { kZeroPadTail, kSplitAndCollect, kRepeatPad };

/// Cuts or pads a clip into fixed-length windows:
///  - kZeroPadTail: one window, clip content at the head, zeros after
///    (content beyond the target length is dropped);
///  - kSplitAndCollect: ceil(n/target) windows, last one zero-padded;
///  - kRepeatPad: one window, clip tiled until the target length
///    (out[i] = in[i mod n]).
std::vector<Waveform> window_clip(const Waveform& wave, WindowPolicy policy,
                                  double target_len_s, int rate);

/// Binary grid container: u32 magic 'PKG1', u32 time_steps, u32 n_mels, then
/// time_steps*n_mels little-endian f32 values row-major. Values are stored in
/// f32; loading back widens to double.
void save_grid(const MelSpectrogram& mel, const std::filesystem::path& path);
MelSpectrogram load_grid(const std::filesystem::path& path);

}  // namespace pamkit
