#include "pamkit/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "pamkit/error.hpp"

namespace pamkit {
namespace {

constexpr double kPi = 3.14159265358979323846;

/// Iterative radix-2 Cooley-Tukey with a per-size twiddle table.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddles_(n / 2) {
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double ang = -2.0 * kPi * static_cast<double>(j) / static_cast<double>(n);
      twiddles_[j] = {std::cos(ang), std::sin(ang)};
    }
  }

  void forward(std::vector<std::complex<double>>& a) const {
    const std::size_t n = n_;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j |= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t stride = n / len;
      for (std::size_t i = 0; i < n; i += len) {
        for (std::size_t j = 0; j < len / 2; ++j) {
          const std::complex<double> w = twiddles_[j * stride];
          const std::complex<double> u = a[i + j];
          const std::complex<double> v = a[i + j + len / 2] * w;
          a[i + j] = u + v;
          a[i + j + len / 2] = u - v;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddles_;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t take_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("grid: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kGridMagic = 0x31474B50;  // "PKG1"

}  // namespace

int MelConfig::frame_samples(int rate) const {
  return static_cast<int>(std::lround(frame_length_s * rate));
}
int MelConfig::hop_samples(int rate) const {
  return static_cast<int>(std::lround(hop_length_s * rate));
}
int MelConfig::fft_size(int rate) const {
  int n = 1;
  while (n < frame_samples(rate)) n <<= 1;
  return n;
}

void MelConfig::validate(int rate) const {
  if (rate <= 0) throw ConfigError("MelConfig: rate must be positive");
  if (n_mels < 1) throw ConfigError("MelConfig: n_mels must be >= 1");
  if (!(fmin_hz > 0.0 && fmin_hz < fmax_hz && fmax_hz <= rate / 2.0)) {
    throw ConfigError("MelConfig: need 0 < fmin < fmax <= rate/2");
  }
  if (frame_samples(rate) < 1) throw ConfigError("MelConfig: frame shorter than one sample");
  if (hop_samples(rate) < 1 || hop_samples(rate) > frame_samples(rate)) {
    throw ConfigError("MelConfig: need 0 < hop <= frame");
  }
}

void PcenConfig::validate() const {
  if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("PcenConfig: need 0 < smoothing <= 1");
  if (gain < 0.0) throw ConfigError("PcenConfig: gain must be >= 0");
  if (bias < 0.0) throw ConfigError("PcenConfig: bias must be >= 0");
  if (root <= 0.0) throw ConfigError("PcenConfig: root must be > 0");
  if (epsilon <= 0.0) throw ConfigError("PcenConfig: epsilon must be > 0");
  if (spectral_pcen) throw ConfigError("PcenConfig: spectral PCEN is not implemented");
}

FrontendConfig default_frontend() { return {}; }

FrontendConfig surfperch_frontend() {
  FrontendConfig cfg;
  cfg.mel.fmin_hz = 50.0;
  cfg.mel.fmax_hz = 16000.0;
  cfg.pcen.smoothing = 0.145;
  cfg.pcen.gain = 0.8;
  cfg.pcen.bias = 10.0;
  cfg.pcen.root = 4.0;
  return cfg;
}

PowerSpectrogram stft_power(const Waveform& wave, const MelConfig& cfg) {
  const int rate = wave.sample_rate;
  const std::size_t frame = static_cast<std::size_t>(cfg.frame_samples(rate));
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples(rate));
  const std::size_t nfft = static_cast<std::size_t>(cfg.fft_size(rate));
  if (wave.samples.size() < frame) {
    throw InsufficientSamplesError("stft_power: wave shorter than one frame");
  }

  // Periodic Hann.
  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(frame));
  }

  PowerSpectrogram out;
  out.frames = (wave.samples.size() - frame) / hop + 1;
  out.bins = nfft / 2 + 1;
  out.values.assign(out.frames * out.bins, 0.0);

  const FftPlan plan(nfft);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t t = 0; t < out.frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < frame; ++i) {
      buf[i] = {static_cast<double>(wave.samples[start + i]) * window[i], 0.0};
    }
    std::fill(buf.begin() + static_cast<long>(frame), buf.end(), std::complex<double>{0.0, 0.0});
    plan.forward(buf);
    for (std::size_t b = 0; b < out.bins; ++b) {
      out.at(t, b) = std::norm(buf[b]);
    }
  }
  return out;
}

MelSpectrogram mel_project(const PowerSpectrogram& power, const MelConfig& cfg, int rate) {
  cfg.validate(rate);
  const std::size_t nfft = static_cast<std::size_t>(cfg.fft_size(rate));
  if (power.bins != nfft / 2 + 1) {
    throw ConfigError("mel_project: power grid bin count does not match the config");
  }

  const std::size_t n_mels = static_cast<std::size_t>(cfg.n_mels);
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> corners(n_mels + 2);
  for (std::size_t i = 0; i < corners.size(); ++i) {
    corners[i] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1);
  }

  // Triangle response in mel, averaged over each FFT bin cell so that every
  // filter keeps positive mass even when narrower than the bin spacing.
  const double bin_hz = static_cast<double>(rate) / static_cast<double>(nfft);
  constexpr int kCellPoints = 8;
  std::vector<std::vector<std::pair<std::size_t, double>>> weights(n_mels);
  for (std::size_t j = 0; j < n_mels; ++j) {
    const double left = corners[j];
    const double peak = corners[j + 1];
    const double right = corners[j + 2];
    for (std::size_t b = 0; b < power.bins; ++b) {
      const double f_center = static_cast<double>(b) * bin_hz;
      double acc = 0.0;
      for (int p = 0; p < kCellPoints; ++p) {
        const double f = f_center + bin_hz * ((p + 0.5) / kCellPoints - 0.5);
        if (f <= 0.0) continue;
        const double m = hz_to_mel(f);
        double tri = 0.0;
        if (m > left && m < right) {
          tri = m <= peak ? (m - left) / (peak - left) : (right - m) / (right - peak);
        }
        acc += tri;
      }
      const double w = acc / kCellPoints;
      if (w > 0.0) weights[j].emplace_back(b, w);
    }
  }

  MelSpectrogram out;
  out.frames = power.frames;
  out.bands = n_mels;
  out.frame_length_s = cfg.frame_length_s;
  out.hop_length_s = cfg.hop_length_s;
  out.values.assign(out.frames * out.bands, 0.0);
  for (std::size_t t = 0; t < power.frames; ++t) {
    for (std::size_t j = 0; j < n_mels; ++j) {
      double acc = 0.0;
      for (const auto& [b, w] : weights[j]) acc += w * power.at(t, b);
      out.at(t, j) = acc;
    }
  }
  return out;
}

MelSpectrogram pcen(const MelSpectrogram& mel, const PcenConfig& cfg) {
  cfg.validate();
  for (double v : mel.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("pcen: mel energies must be finite and nonnegative");
    }
  }

  MelSpectrogram out = mel;
  const double s = cfg.smoothing;
  const double g = cfg.gain;
  const double d = cfg.bias;
  const double r = cfg.root;
  const double eps = cfg.epsilon;
  const double d_pow_r = std::pow(d, r);

  for (std::size_t b = 0; b < mel.bands; ++b) {
    double m = cfg.zero_initial_state ? 0.0 : mel.at(0, b);
    for (std::size_t t = 0; t < mel.frames; ++t) {
      const double e = mel.at(t, b);
      if (t > 0) m = (1.0 - s) * m + s * e;
      out.at(t, b) = std::pow(e / std::pow(eps + m, g) + d, r) - d_pow_r;
    }
  }
  return out;
}

MelSpectrogram log_compress(const MelSpectrogram& mel) {
  MelSpectrogram out = mel;
  for (double& v : out.values) v = std::log1p(v);
  return out;
}

MelSpectrogram frontend_grid(const Waveform& wave, const FrontendConfig& cfg) {
  MelSpectrogram mel = mel_project(stft_power(wave, cfg.mel), cfg.mel, wave.sample_rate);
  if (cfg.log_before_pcen) mel = log_compress(mel);
  return pcen(mel, cfg.pcen);
}

std::vector<Waveform> window_clip(const Waveform& wave, WindowPolicy policy,
                                  double target_len_s, int rate) {
  if (wave.samples.empty()) throw ConfigError("window_clip: wave is empty");
  if (rate != wave.sample_rate) throw ConfigError("window_clip: rate does not match the wave");
  const std::size_t target = static_cast<std::size_t>(std::llround(target_len_s * rate));
  if (target == 0) throw ConfigError("window_clip: target length rounds to zero samples");

  const std::size_t n = wave.samples.size();
  std::vector<Waveform> windows;
  switch (policy) {
    case WindowPolicy::kZeroPadTail: {
      Waveform w;
      w.sample_rate = rate;
      w.samples.assign(target, 0.0f);
      std::copy_n(wave.samples.begin(), std::min(n, target), w.samples.begin());
      windows.push_back(std::move(w));
      break;
    }
    case WindowPolicy::kSplitAndCollect: {
      const std::size_t count = (n + target - 1) / target;
      for (std::size_t c = 0; c < count; ++c) {
        Waveform w;
        w.sample_rate = rate;
        w.samples.assign(target, 0.0f);
        const std::size_t start = c * target;
        const std::size_t len = std::min(target, n - start);
        std::copy_n(wave.samples.begin() + static_cast<long>(start), len, w.samples.begin());
        windows.push_back(std::move(w));
      }
      break;
    }
    case WindowPolicy::kRepeatPad: {
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(target);
      for (std::size_t i = 0; i < target; ++i) w.samples[i] = wave.samples[i % n];
      windows.push_back(std::move(w));
      break;
    }
  }
  return windows;
}

void save_grid(const MelSpectrogram& mel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_grid: cannot open " + path.string());
  put_u32(out, kGridMagic);
  put_u32(out, static_cast<std::uint32_t>(mel.frames));
  put_u32(out, static_cast<std::uint32_t>(mel.bands));
  for (double v : mel.values) {
    const float f = static_cast<float>(v);
    static_assert(sizeof(float) == 4);
    char b[4];
    std::memcpy(b, &f, 4);
    out.write(b, 4);
  }
  if (!out) throw IoError("save_grid: write failed for " + path.string());
}

MelSpectrogram load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_grid: cannot open " + path.string());
  if (take_u32(in) != kGridMagic) throw FormatError("load_grid: bad magic in " + path.string());
  MelSpectrogram mel;
  mel.frames = take_u32(in);
  mel.bands = take_u32(in);
  mel.values.resize(mel.frames * mel.bands);
  for (double& v : mel.values) {
    char b[4];
    in.read(b, 4);
    if (!in) throw FormatError("load_grid: truncated grid in " + path.string());
    float f;
    std::memcpy(&f, b, 4);
    v = static_cast<double>(f);
  }
  return mel;
}

}  // namespace pamkit
