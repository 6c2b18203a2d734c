#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "pamkit/audio.hpp"
#include "pamkit/error.hpp"
#include "pamkit/frontend.hpp"
#include "support.hpp"

using namespace pamkit;

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xff));
}

void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x & 0xff));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
}

std::vector<std::uint8_t> wav_bytes(int rate, int channels, int bits,
                                    const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> v;
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  v.insert(v.end(), {'R', 'I', 'F', 'F'});
  push_u32(v, 36 + data_size);
  v.insert(v.end(), {'W', 'A', 'V', 'E'});
  v.insert(v.end(), {'f', 'm', 't', ' '});
  push_u32(v, 16);
  push_u16(v, 1);  // PCM
  push_u16(v, static_cast<std::uint16_t>(channels));
  push_u32(v, static_cast<std::uint32_t>(rate));
  push_u32(v, static_cast<std::uint32_t>(rate * channels * bits / 8));
  push_u16(v, static_cast<std::uint16_t>(channels * bits / 8));
  push_u16(v, static_cast<std::uint16_t>(bits));
  v.insert(v.end(), {'d', 'a', 't', 'a'});
  push_u32(v, data_size);
  for (std::int16_t s : samples) push_u16(v, static_cast<std::uint16_t>(s));
  return v;
}

}  // namespace

TEST_CASE("wav roundtrip stays within one lsb") {
  testsup::TempDir tmp("wav-roundtrip");
  Rng rng(11);
  const Waveform original =
      testsup::tone_clip(523.0, 0.6, 0.1, 0.37, 16000, rng);
  const auto path = tmp.path() / "tone.wav";
  write_wav(original, path);
  const Waveform loaded = read_wav(path);

  REQUIRE(loaded.sample_rate == 16000);
  REQUIRE(loaded.samples.size() == original.samples.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    max_err = std::max(max_err, std::abs(static_cast<double>(loaded.samples[i]) -
                                         static_cast<double>(original.samples[i])));
  }
  CHECK(max_err <= 1.0 / 32768.0);
}

TEST_CASE("one second of silence writes a 32044 byte file") {
  testsup::TempDir tmp("wav-size");
  const Waveform silence = synth_silence(1.0, 16000);
  REQUIRE(silence.samples.size() == 16000);
  const auto path = tmp.path() / "silence.wav";
  write_wav(silence, path);
  CHECK(std::filesystem::file_size(path) == 32044);

  const Waveform loaded = read_wav(path);
  CHECK(loaded.samples.size() == 16000);
  for (float s : loaded.samples) REQUIRE(s == 0.0f);
}

TEST_CASE("reader scales int16 by 1/32768") {
  testsup::TempDir tmp("wav-scale");
  const auto path = tmp.path() / "mono.wav";
  write_bytes(path, wav_bytes(16000, 1, 16, {16384, -16384, 32767, -32768}));
  const Waveform wave = read_wav(path);
  REQUIRE(wave.samples.size() == 4);
  CHECK(wave.samples[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(wave.samples[1] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(wave.samples[2] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-9));
  CHECK(wave.samples[3] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("writer saturates full-scale amplitude to 32767") {
  testsup::TempDir tmp("wav-sat");
  const auto path = tmp.path() / "full.wav";
  write_wav(Waveform::create({1.0f, -1.0f}, 8000), path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(44);
  std::int16_t raw[2];
  in.read(reinterpret_cast<char*>(raw), 4);
  CHECK(raw[0] == 32767);
  CHECK(raw[1] == -32768);
}

TEST_CASE("stereo input averages to mono") {
  testsup::TempDir tmp("wav-stereo");
  const auto path = tmp.path() / "stereo.wav";
  // Interleaved L,R pairs.
  write_bytes(path, wav_bytes(16000, 2, 16, {16384, 0, 0, -16384}));
  const Waveform wave = read_wav(path);
  REQUIRE(wave.samples.size() == 2);
  CHECK(wave.samples[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(wave.samples[1] == doctest::Approx(-0.25).epsilon(1e-9));
}

TEST_CASE("malformed and unsupported wav inputs are rejected") {
  testsup::TempDir tmp("wav-bad");
  const auto garbage = tmp.path() / "garbage.wav";
  write_bytes(garbage, {'n', 'o', 't', 'a', 'w', 'a', 'v', '!'});
  CHECK_THROWS_AS(read_wav(garbage), FormatError);

  const auto eight_bit = tmp.path() / "eight.wav";
  write_bytes(eight_bit, wav_bytes(16000, 1, 8, {0, 0}));
  CHECK_THROWS_AS(read_wav(eight_bit), UnsupportedError);

  CHECK_THROWS_AS(read_wav(tmp.path() / "absent.wav"), IoError);
}

TEST_CASE("resample at the source rate returns the waveform unchanged") {
  Rng rng(3);
  const Waveform wave = testsup::tone_clip(880.0, 0.4, 0.05, 0.2, 16000, rng);
  const Waveform same = resample(wave, 16000);
  REQUIRE(same.samples.size() == wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    REQUIRE(same.samples[i] == wave.samples[i]);
  }
}

TEST_CASE("resample scales the length with the rate ratio") {
  const Waveform wave = synth_silence(1.0, 16000);
  REQUIRE(wave.samples.size() == 16000);
  const Waveform up = resample(wave, 32000);
  CHECK(up.sample_rate == 32000);
  CHECK(std::abs(static_cast<long>(up.samples.size()) - 32000L) <= 1);

  const Waveform odd = resample(synth_silence(0.5, 22050), 16000);
  CHECK(std::abs(static_cast<long>(odd.samples.size()) - 8000L) <= 1);
}

TEST_CASE("upsampled sine keeps its frequency and a clean spectrum") {
  const Waveform sine = synth_sine(1000.0, 1.0, 16000);
  const Waveform up = resample(sine, 32000);

  MelConfig cfg;
  cfg.frame_length_s = 4096.0 / 32000.0;
  cfg.hop_length_s = cfg.frame_length_s;
  cfg.fmax_hz = 15000.0;
  const PowerSpectrogram spec = stft_power(up, cfg);
  REQUIRE(spec.frames >= 3);

  // Interior frame, away from filter warm-up.
  const std::size_t t = 1;
  const double bin_hz = 32000.0 / 4096.0;
  std::size_t peak = 0;
  double peak_power = 0.0;
  for (std::size_t kbin = 0; kbin < spec.bins; ++kbin) {
    if (spec.at(t, kbin) > peak_power) {
      peak_power = spec.at(t, kbin);
      peak = kbin;
    }
  }
  CHECK(std::abs(static_cast<double>(peak) * bin_hz - 1000.0) <= bin_hz);
  double sidelobe = 0.0;
  for (std::size_t kbin = 0; kbin < spec.bins; ++kbin) {
    const auto dist = peak > kbin ? peak - kbin : kbin - peak;
    if (dist <= 2) continue;
    sidelobe = std::max(sidelobe, spec.at(t, kbin));
  }
  CHECK(sidelobe < 0.01 * peak_power);
}

TEST_CASE("resampling up and back reproduces band-limited input") {
  // Hann-enveloped tone well under 7 kHz, so edges decay smoothly.
  const int rate = 16000;
  const std::size_t n = 16000;
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
    samples[i] = static_cast<float>(
        0.7 * env * std::sin(2.0 * M_PI * 3123.0 * i / rate));
  }
  const Waveform wave = Waveform::create(samples, rate);
  const Waveform back = resample(resample(wave, 32000), 16000);
  REQUIRE(std::abs(static_cast<long>(back.samples.size()) - static_cast<long>(n)) <= 1);

  double max_err = 0.0;
  const std::size_t m = std::min(back.samples.size(), n);
  for (std::size_t i = 0; i < m; ++i) {
    max_err = std::max(max_err, std::abs(static_cast<double>(back.samples[i]) -
                                         static_cast<double>(wave.samples[i])));
  }
  CHECK(max_err < 1e-3);
}

TEST_CASE("synth produces deterministic signals") {
  CHECK(synth_silence(0.25, 32000).samples.size() == 8000);
  CHECK(synth_silence(2.0, 8000).samples.size() == 16000);

  const Waveform sine = synth_sine(440.0, 1.0, 16000);
  CHECK(sine.samples[0] == 0.0f);
  // Closest sample to the first quarter period.
  const int quarter = static_cast<int>(std::round(16000.0 / (4.0 * 440.0)));
  CHECK(sine.samples[static_cast<std::size_t>(quarter)] > 0.999f);

  const Waveform a = synth_noise(7, 0.1, 16000);
  const Waveform b = synth_noise(7, 0.1, 16000);
  const Waveform c = synth_noise(8, 0.1, 16000);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  for (float s : a.samples) {
    REQUIRE(s >= -1.0f);
    REQUIRE(s < 1.0f);
  }
}

TEST_CASE("waveform create validates rate and sample range") {
  CHECK_THROWS_AS(Waveform::create({0.0f}, 0), ConfigError);
  CHECK_THROWS_AS(Waveform::create({1.5f}, 16000), ConfigError);
  CHECK_THROWS_AS(Waveform::create({std::nanf("")}, 16000), ConfigError);
}

TEST_CASE("file loader resolves paths against its root") {
  testsup::TempDir tmp("loader");
  std::filesystem::create_directories(tmp.path() / "ds");
  Rng rng(5);
  const Waveform wave = testsup::tone_clip(700.0, 0.5, 0.02, 0.1, 16000, rng);
  write_wav(wave, tmp.path() / "ds" / "clip.wav");

  const AudioLoader loader = file_loader(tmp.path());
  const Waveform loaded = loader("ds/clip.wav");
  CHECK(loaded.samples.size() == wave.samples.size());
  CHECK_THROWS_AS(loader("ds/missing.wav"), IoError);
}

TEST_CASE("memoized loader serves the first read on repeat requests") {
  testsup::TempDir tmp("memo");
  const auto path = tmp.path() / "clip.wav";
  write_wav(synth_sine(500.0, 0.05, 16000), path);

  const AudioLoader loader = memoized_loader(file_loader(tmp.path()));
  const Waveform first = loader("clip.wav");
  write_wav(synth_silence(0.05, 16000), path);
  const Waveform second = loader("clip.wav");
  CHECK(first.samples == second.samples);
  // A fresh loader sees the new file contents.
  const Waveform fresh = file_loader(tmp.path())("clip.wav");
  CHECK(fresh.samples != first.samples);
}
