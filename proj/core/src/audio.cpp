#include "pamkit/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "pamkit/error.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {
namespace {

constexpr double kPi = 3.14159265358979323846;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

/// Zeroth-order modified Bessel function of the first kind (series form),
/// used by the Kaiser window.
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform Waveform::create(std::vector<float> samples, int sample_rate) {
  if (sample_rate <= 0) throw ConfigError("Waveform: sample_rate must be positive");
  for (float s : samples) {
    if (!std::isfinite(s)) throw ConfigError("Waveform: non-finite sample");
    if (s < -1.0f || s > 1.0f) throw ConfigError("Waveform: sample outside [-1, 1]");
  }
  Waveform w;
  w.samples = std::move(samples);
  w.sample_rate = sample_rate;
  return w;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("read_wav: not a RIFF/WAVE file: " + path.string());
  }

  int channels = 0;
  int rate = 0;
  int bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_len = get_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + chunk_len > bytes.size()) throw FormatError("read_wav: truncated chunk in " + path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError("read_wav: short fmt chunk");
      const std::uint16_t format_tag = get_u16(bytes.data() + pos);
      if (format_tag != 1) throw UnsupportedError("read_wav: only PCM (format tag 1) is supported");
      channels = get_u16(bytes.data() + pos + 2);
      rate = static_cast<int>(get_u32(bytes.data() + pos + 4));
      bits = get_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = chunk_len;
    }
    pos += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw FormatError("read_wav: missing fmt or data chunk");
  if (bits != 16) throw UnsupportedError("read_wav: unsupported bit depth " + std::to_string(bits));
  if (channels != 1 && channels != 2) {
    throw UnsupportedError("read_wav: unsupported channel count " + std::to_string(channels));
  }
  if (rate <= 0) throw FormatError("read_wav: invalid sample rate");

  const std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
  const std::size_t n_frames = data_len / frame_bytes;
  std::vector<float> samples(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + 2 * c;
      const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      acc += static_cast<double>(v) / 32768.0;
    }
    samples[i] = static_cast<float>(acc / channels);
  }
  return Waveform::create(std::move(samples), rate);
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  const std::size_t n = wave.samples.size();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * 2);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out += "data";
  put_u32(out, data_bytes);
  for (float s : wave.samples) {
    const long q = std::lround(static_cast<double>(s) * 32768.0);
    const std::int16_t v = static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767));
    put_u16(out, static_cast<std::uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_wav: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_wav: write failed for " + path.string());
}

namespace {

/// Kaiser-windowed sinc kernel, argument in low-rate sample units.
double kernel_value(double u, double half, double beta, double i0_beta) {
  const double frac = u / half;
  if (frac <= -1.0 || frac >= 1.0) return 0.0;
  const double window = bessel_i0(beta * std::sqrt(1.0 - frac * frac)) / i0_beta;
  return sinc(u) * window;
}

}  // namespace

Waveform resample(const Waveform& wave, int target_rate, const ResampleConfig& cfg) {
  if (target_rate <= 0) throw ConfigError("resample: target_rate must be positive");
  if (target_rate == wave.sample_rate) return wave;
  if (cfg.taps < 4 || cfg.taps % 2 != 0) throw ConfigError("resample: taps must be even and >= 4");

  const long g = std::gcd(static_cast<long>(target_rate), static_cast<long>(wave.sample_rate));
  const long up = target_rate / g;              // output samples per block
  const long down = wave.sample_rate / g;       // input samples per block
  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  // Cutoff sits at the lower Nyquist; `scale` stretches the kernel so the
  // tap count is effectively measured at the lower rate.
  const double scale = std::min(1.0, ratio);
  const double half = cfg.taps / 2.0;
  const long support = static_cast<long>(std::ceil(half / scale));  // input samples per side
  const double i0_beta = bessel_i0(cfg.kaiser_beta);

  // Output sample i sits at input position t = i*down/up = floor(t) + phase/up
  // with phase = (i*down) mod up. Weights depend only on the phase, so one
  // normalized tap table per phase covers the whole signal. Irrational-feel
  // ratios still work; `up` just gets large, so cap the table.
  if (up > 65536) throw ConfigError("resample: rate pair too coprime for the polyphase table");

  std::vector<std::vector<double>> taps(static_cast<std::size_t>(up));
  for (long phase = 0; phase < up; ++phase) {
    const double fr = static_cast<double>(phase) / up;
    std::vector<double>& w = taps[static_cast<std::size_t>(phase)];
    w.resize(static_cast<std::size_t>(2 * support + 1));
    double norm = 0.0;
    for (long j = -support; j <= support; ++j) {
      const double u = (fr - static_cast<double>(j)) * scale;
      const double v = kernel_value(u, half, cfg.kaiser_beta, i0_beta);
      w[static_cast<std::size_t>(j + support)] = v;
      norm += v;
    }
    for (double& v : w) v /= norm;
  }

  const std::size_t n_in = wave.samples.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_rate / wave.sample_rate));
  std::vector<float> out(n_out);

  for (std::size_t i = 0; i < n_out; ++i) {
    const unsigned long long num = static_cast<unsigned long long>(i) * static_cast<unsigned long long>(down);
    const long base = static_cast<long>(num / static_cast<unsigned long long>(up));
    const long phase = static_cast<long>(num % static_cast<unsigned long long>(up));
    const std::vector<double>& w = taps[static_cast<std::size_t>(phase)];
    const long k_lo = std::max<long>(0, base - support);
    const long k_hi = std::min<long>(static_cast<long>(n_in) - 1, base + support);
    double acc = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      acc += w[static_cast<std::size_t>(k - base + support)] *
             static_cast<double>(wave.samples[static_cast<std::size_t>(k)]);
    }
    out[i] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }

  Waveform result;
  result.samples = std::move(out);
  result.sample_rate = target_rate;
  return result;
}

Waveform synth(const SynthSpec& spec, double duration_s, int sample_rate) {
  if (duration_s <= 0.0) throw ConfigError("synth: duration must be positive");
  if (sample_rate <= 0) throw ConfigError("synth: rate must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<float> samples(n, 0.0f);
  switch (spec.kind) {
    case SynthKind::kSilence:
      break;
    case SynthKind::kSine: {
      const double w = 2.0 * kPi * spec.frequency_hz / sample_rate;
      for (std::size_t i = 0; i < n; ++i) {
        samples[i] = static_cast<float>(std::sin(w * static_cast<double>(i)));
      }
      break;
    }
    case SynthKind::kNoise: {
      Rng rng(spec.seed);
      for (std::size_t i = 0; i < n; ++i) {
        samples[i] = static_cast<float>(2.0 * rng.next_double() - 1.0);
      }
      break;
    }
  }
  Waveform w;
  w.samples = std::move(samples);
  w.sample_rate = sample_rate;
  return w;
}

AudioLoader file_loader(const std::filesystem::path& root) {
  return [root](const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_relative() && !root.empty()) p = root / p;
    return read_wav(p);
  };
}

AudioLoader memoized_loader(AudioLoader inner) {
  auto cache = std::make_shared<std::unordered_map<std::string, Waveform>>();
  auto mutex = std::make_shared<std::mutex>();
  return [inner = std::move(inner), cache, mutex](const std::string& path) {
    {
      std::lock_guard<std::mutex> lock(*mutex);
      auto it = cache->find(path);
      if (it != cache->end()) return it->second;
    }
    Waveform wave = inner(path);
    std::lock_guard<std::mutex> lock(*mutex);
    return cache->emplace(path, std::move(wave)).first->second;
  };
}

}  // namespace pamkit
