#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "test_support.hpp"
#include "xdsv/error.hpp"
#include "xdsv/frontend.hpp"

using namespace xdsv;

namespace {

Waveform noise_wave(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  Rng rng = derive_rng(seed, "test.wave");
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = static_cast<float>(amp * standard_normal(rng));
  return w;
}

Waveform tone(double hz, double seconds, double amp = 0.5) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * w.sample_rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * double(i) / w.sample_rate));
  return w;
}

// Mel scale written with log10, equal to the natural-log form.
double mel10(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double imel10(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Direct log-mel computation: naive DFT and per-bin triangle weights.
std::vector<std::vector<double>> naive_log_mel(const Waveform& w, int n_mels) {
  const int frame = 400, hop = 160, nfft = 512, bins = nfft / 2 + 1;
  const int frames = 1 + int((w.samples.size() - frame) / hop);
  const double lo = mel10(20.0), hi = mel10(8000.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = imel10(lo + (hi - lo) * i / (n_mels + 1));

  std::vector<std::vector<double>> out(n_mels, std::vector<double>(frames));
  for (int t = 0; t < frames; ++t) {
    std::vector<double> power(bins);
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc = 0;
      for (int n = 0; n < frame; ++n) {
        const double win = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * n / (frame - 1));
        acc += double(w.samples[t * hop + n]) * win *
               std::polar(1.0, -2 * std::numbers::pi * double(k) * n / nfft);
      }
      power[k] = std::norm(acc);
    }
    for (int m = 0; m < n_mels; ++m) {
      double e = 0;
      for (int k = 0; k < bins; ++k) {
        const double f = mel10(k * 16000.0 / nfft);
        const double l = mel10(edges[m]), c = mel10(edges[m + 1]), r = mel10(edges[m + 2]);
        double wt = 0;
        if (f > l && f <= c) wt = (f - l) / (c - l);
        else if (f > c && f < r) wt = (r - f) / (r - c);
        e += wt * power[k];
      }
      out[m][t] = std::log(std::max(e, 1e-10));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("crop: longer input yields a contiguous window") {
  const Waveform w = noise_wave(64000, 1);
  Rng rng = derive_rng(2, "crop");
  const Waveform c = crop_or_pad(w, 2.0, rng);
  REQUIRE(c.samples.size() == 32000);
  auto it = std::search(w.samples.begin(), w.samples.end(), c.samples.begin(), c.samples.end());
  CHECK(it != w.samples.end());

  Rng again = derive_rng(2, "crop");
  CHECK(crop_or_pad(w, 2.0, again).samples == c.samples);
}

TEST_CASE("crop: exact length is unchanged") {
  const Waveform w = noise_wave(32000, 3);
  Rng rng = derive_rng(1, "crop");
  CHECK(crop_or_pad(w, 2.0, rng).samples == w.samples);
}

TEST_CASE("crop: short input is tiled") {
  const Waveform w = noise_wave(8000, 4);
  Rng rng = derive_rng(1, "crop");
  const Waveform c = crop_or_pad(w, 2.0, rng);
  REQUIRE(c.samples.size() == 32000);
  for (int rep = 0; rep < 4; ++rep)
    for (std::size_t i = 0; i < 8000; ++i) REQUIRE(c.samples[rep * 8000 + i] == w.samples[i]);
}

TEST_CASE("crop: output length is exact for any input length") {
  Rng rng = derive_rng(7, "crop.lengths");
  for (std::size_t n : {1u, 2u, 159u, 16000u, 31999u, 32001u, 50000u}) {
    const Waveform w = noise_wave(n, n);
    for (double target : {0.01, 0.5, 2.0, 3.3})
      CHECK(crop_or_pad(w, target, rng).samples.size() == std::size_t(std::llround(target * 16000)));
  }
  CHECK_THROWS_AS(crop_or_pad(Waveform{}, 2.0, rng), Error);
  CHECK_THROWS_AS(crop_or_pad(noise_wave(10, 1), 0.0, rng), Error);
}

TEST_CASE("log_mel: frame count and shape") {
  const LogMelFeature f = log_mel(noise_wave(32000, 5));
  CHECK(f.n_mels() == 80);
  CHECK(f.frames() == 198);
  CHECK(frame_count(32000, 400, 160) == 198);
  CHECK(frame_count(400, 400, 160) == 1);
  CHECK_THROWS_AS(log_mel(noise_wave(399, 5)), Error);
}

TEST_CASE("log_mel: silence hits the floor everywhere") {
  Waveform w;
  w.samples.assign(16000, 0.0f);
  const LogMelFeature f = log_mel(w);
  for (std::size_t i = 0; i < f.values.size(); ++i)
    REQUIRE(f.values[i] == static_cast<float>(std::log(1e-10)));
}

TEST_CASE("log_mel: a 1 kHz tone peaks in the bin centred nearest 1 kHz") {
  const LogMelFeature f = log_mel(tone(1000.0, 1.0));
  const double lo = mel10(20.0), hi = mel10(8000.0);
  int expected = 0;
  double best = 1e9;
  for (int m = 0; m < 80; ++m) {
    const double c = lo + (hi - lo) * (m + 1) / 81.0;
    if (std::abs(c - mel10(1000.0)) < best) {
      best = std::abs(c - mel10(1000.0));
      expected = m;
    }
  }
  for (int t = 0; t < f.frames(); t += 17) {
    int arg = 0;
    for (int m = 1; m < 80; ++m)
      if (f.values.at(m, t) > f.values.at(arg, t)) arg = m;
    CHECK(arg == expected);
  }
}

TEST_CASE("log_mel: matches a naive DFT and filterbank") {
  const Waveform w = noise_wave(400 + 160 * 4, 6);
  const LogMelFeature f = log_mel(w);
  const auto ref = naive_log_mel(w, 80);
  REQUIRE(f.frames() == int(ref[0].size()));
  double worst = 0;
  for (int m = 0; m < 80; ++m)
    for (int t = 0; t < f.frames(); ++t) worst = std::max(worst, std::abs(f.values.at(m, t) - ref[m][t]));
  CHECK(worst < 1e-4);
}

TEST_CASE("log_mel: doubling the amplitude adds log 4") {
  const Waveform w = noise_wave(16000, 8);
  Waveform w2 = w;
  for (auto& s : w2.samples) s *= 2.0f;
  const LogMelFeature a = log_mel(w), b = log_mel(w2);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    REQUIRE(b.values[i] - a.values[i] == doctest::Approx(std::log(4.0)).epsilon(1e-4));
  CHECK(log_mel(w).values.vec() == a.values.vec());
}

TEST_CASE("mean_normalize: every bin has zero mean") {
  LogMelFeature f = log_mel(noise_wave(16000, 9));
  mean_normalize(f);
  for (int m = 0; m < f.n_mels(); ++m) {
    double s = 0;
    for (int t = 0; t < f.frames(); ++t) s += f.values.at(m, t);
    CHECK(std::abs(s / f.frames()) < 1e-5);
  }
}

TEST_CASE("augment: off, infinite SNR and fixed SNR") {
  const Waveform w = noise_wave(16000, 10, 0.2);
  Rng rng = derive_rng(1, "aug");
  CHECK(augment(w, AugmentPolicy::off(), rng).samples == w.samples);

  const double inf = std::numeric_limits<double>::infinity();
  const Waveform same = augment(w, AugmentPolicy::white_noise(inf, inf), rng);
  for (std::size_t i = 0; i < w.samples.size(); ++i) REQUIRE(std::abs(same.samples[i] - w.samples[i]) <= 1e-9);

  const Waveform noisy = augment(w, AugmentPolicy::white_noise(10.0, 10.0), rng);
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    ps += double(w.samples[i]) * w.samples[i];
    const double d = double(noisy.samples[i]) - w.samples[i];
    pn += d * d;
  }
  CHECK(std::abs(10 * std::log10(ps / pn) - 10.0) < 0.1);

  CHECK_THROWS_AS(augment(w, AugmentPolicy::white_noise(10.0, 5.0), rng), Error);
  CHECK_THROWS_AS(augment(w, AugmentPolicy::white_noise(std::nan(""), 5.0), rng), Error);
}

TEST_CASE("wav: round trip within 16-bit quantization") {
  testing::TempDir dir("wav");
  const Waveform w = noise_wave(3000, 11, 0.25);
  write_wav(dir / "a.wav", w);
  const Waveform r = read_wav(dir / "a.wav");
  REQUIRE(r.samples.size() == w.samples.size());
  CHECK(r.sample_rate == 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) REQUIRE(std::abs(r.samples[i] - w.samples[i]) <= 0.5 / 32768);
  testing::write_file(dir / "bad.wav", "RIFF....");
  CHECK_THROWS_AS(read_wav(dir / "bad.wav"), Error);
  CHECK_THROWS_AS(read_wav(dir / "none.wav"), Error);
}
