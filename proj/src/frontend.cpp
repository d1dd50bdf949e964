#include "xdsv/frontend.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "xdsv/error.hpp"

namespace xdsv {

Waveform crop_or_pad(const Waveform& w, double target_s, Rng& rng) {
  require(target_s > 0.0, ErrorKind::Argument, "crop target must be positive");
  require(!w.samples.empty(), ErrorKind::Argument, "cannot crop an empty waveform");
  const std::size_t target = static_cast<std::size_t>(std::llround(target_s * w.sample_rate));
  require(target > 0, ErrorKind::Argument, "crop target is shorter than one sample");
  const std::size_t len = w.samples.size();
  if (len == target) return w;
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(target);
  if (len > target) {
    const std::size_t start = uniform_index(rng, len - target + 1);
    std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(start), target,
                out.samples.begin());
  } else {
    for (std::size_t i = 0; i < target; ++i) out.samples[i] = w.samples[i % len];
  }
  return out;
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

MelFilterbank::MelFilterbank(int n_mels, int n_fft, int sample_rate, double low_hz,
                             double high_hz)
    : n_mels_(n_mels) {
  require(n_mels > 0, ErrorKind::Config, "n_mels must be positive");
  const double nyquist = 0.5 * sample_rate;
  if (high_hz <= 0.0) high_hz = nyquist;
  require(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist, ErrorKind::Config,
          "invalid mel frequency range");
  const double mel_lo = hz_to_mel(low_hz), mel_hi = hz_to_mel(high_hz);
  const double delta = (mel_hi - mel_lo) / (n_mels + 1);
  const int n_bins = n_fft / 2 + 1;
  const double bin_hz = double(sample_rate) / n_fft;
  centers_hz_.resize(n_mels);
  first_bin_.resize(n_mels);
  weights_.resize(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    const double left = mel_lo + m * delta, center = left + delta, right = center + delta;
    centers_hz_[m] = mel_to_hz(center);
    first_bin_[m] = -1;
    for (int k = 0; k < n_bins; ++k) {
      const double mel = hz_to_mel(k * bin_hz);
      if (mel <= left || mel >= right) continue;
      const double wt = mel <= center ? (mel - left) / delta : (right - mel) / delta;
      if (first_bin_[m] < 0) first_bin_[m] = k;
      weights_[m].resize(static_cast<std::size_t>(k - first_bin_[m] + 1), 0.0);
      weights_[m][static_cast<std::size_t>(k - first_bin_[m])] = wt;
    }
  }
}

void MelFilterbank::apply(const std::vector<double>& power, std::vector<double>& energies) const {
  energies.assign(n_mels_, 0.0);
  for (int m = 0; m < n_mels_; ++m) {
    if (first_bin_[m] < 0) continue;
    double e = 0.0;
    for (std::size_t i = 0; i < weights_[m].size(); ++i)
      e += weights_[m][i] * power[static_cast<std::size_t>(first_bin_[m]) + i];
    energies[m] = e;
  }
}

int frame_count(std::size_t samples, int frame_length, int frame_shift) {
  if (samples < static_cast<std::size_t>(frame_length)) return 0;
  return 1 + static_cast<int>((samples - frame_length) / frame_shift);
}

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex plan_mutex;

struct RealFft {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit RealFft(int size) : n(size) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(plan_mutex);
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
};

}  // namespace

LogMelFeature log_mel(const Waveform& w, const LogMelConfig& cfg) {
  require(w.sample_rate > 0, ErrorKind::Validation, "sample rate must be positive");
  const int frame_len = static_cast<int>(std::lround(cfg.frame_length_ms * w.sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lround(cfg.frame_shift_ms * w.sample_rate / 1000.0));
  require(frame_len > 0 && hop > 0, ErrorKind::Config, "frame length and shift must be positive");
  const int frames = frame_count(w.samples.size(), frame_len, hop);
  require(frames >= 1, ErrorKind::Argument,
          "waveform of " + std::to_string(w.samples.size()) + " samples is shorter than one frame");
  int n_fft = 1;
  while (n_fft < frame_len) n_fft <<= 1;
  const MelFilterbank bank(cfg.n_mels, n_fft, w.sample_rate, cfg.low_freq_hz, cfg.high_freq_hz);
  std::vector<double> window(frame_len);
  for (int i = 0; i < frame_len; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_len - 1));

  LogMelFeature out;
  out.frame_length_ms = cfg.frame_length_ms;
  out.frame_shift_ms = cfg.frame_shift_ms;
  out.values = Tensor<float>({cfg.n_mels, frames});
  RealFft fft(n_fft);
  std::vector<double> power(n_fft / 2 + 1), energies;
  for (int t = 0; t < frames; ++t) {
    const float* x = w.samples.data() + static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i) fft.in[i] = i < frame_len ? x[i] * window[i] : 0.0;
    fftw_execute(fft.plan);
    for (int k = 0; k <= n_fft / 2; ++k) power[k] = fft.out[k][0] * fft.out[k][0] + fft.out[k][1] * fft.out[k][1];
    bank.apply(power, energies);
    for (int m = 0; m < cfg.n_mels; ++m)
      out.values.at(m, t) = static_cast<float>(std::log(std::max(energies[m], cfg.floor)));
  }
  return out;
}

void mean_normalize(LogMelFeature& feature) {
  const int mels = feature.n_mels(), frames = feature.frames();
  for (int m = 0; m < mels; ++m) {
    double mean = 0.0;
    for (int t = 0; t < frames; ++t) mean += feature.values.at(m, t);
    mean /= frames;
    for (int t = 0; t < frames; ++t)
      feature.values.at(m, t) = static_cast<float>(feature.values.at(m, t) - mean);
  }
}

void AugmentPolicy::validate() const {
  if (!enabled) return;
  require(!std::isnan(snr_db_min) && !std::isnan(snr_db_max) && snr_db_min <= snr_db_max,
          ErrorKind::Config, "invalid SNR range");
  require(snr_db_min > -std::numeric_limits<double>::infinity(), ErrorKind::Config,
          "SNR lower bound must be finite or +inf");
}

Waveform augment(const Waveform& w, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  if (!policy.enabled) return w;
  const double snr_db = policy.snr_db_min == policy.snr_db_max
                            ? policy.snr_db_min
                            : uniform_real(rng, policy.snr_db_min, policy.snr_db_max);
  if (std::isinf(snr_db)) return w;
  double signal_power = 0.0;
  for (float s : w.samples) signal_power += double(s) * s;
  if (w.samples.empty() || signal_power == 0.0) return w;
  signal_power /= double(w.samples.size());
  std::vector<double> noise(w.samples.size());
  double noise_power = 0.0;
  for (auto& n : noise) {
    n = standard_normal(rng);
    noise_power += n * n;
  }
  noise_power /= double(noise.size());
  const double gain = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0) / noise_power);
  Waveform out = w;
  for (std::size_t i = 0; i < noise.size(); ++i)
    out.samples[i] = static_cast<float>(w.samples[i] + gain * noise[i]);
  return out;
}

}  // namespace xdsv
