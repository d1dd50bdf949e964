#pragma once

#include <filesystem>
#include <vector>

#include "xdsv/random.hpp"
#include "xdsv/tensor.hpp"

namespace xdsv {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const { return double(samples.size()) / sample_rate; }
  void validate() const;
};

// Mono 16-bit PCM WAV.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Output has round(target_s * rate) samples. Longer input: uniformly random
// contiguous crop. Shorter input: cyclic repetition, then truncation.
Waveform crop_or_pad(const Waveform& w, double target_s, Rng& rng);

struct LogMelConfig {
  int n_mels = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // <= 0: Nyquist
  double floor = 1e-10;
};

struct LogMelFeature {
  Tensor<float> values;  // [n_mels, frames]
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;

  int n_mels() const { return values.dim(0); }
  int frames() const { return values.dim(1); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters equally spaced on the mel scale, applied to a power
// spectrum of n_fft/2 + 1 bins.
class MelFilterbank {
 public:
  MelFilterbank(int n_mels, int n_fft, int sample_rate, double low_hz, double high_hz);

  int n_mels() const { return n_mels_; }
  double center_hz(int bin) const { return centers_hz_[bin]; }
  void apply(const std::vector<double>& power, std::vector<double>& energies) const;

 private:
  int n_mels_;
  std::vector<double> centers_hz_;
  std::vector<int> first_bin_;
  std::vector<std::vector<double>> weights_;
};

int frame_count(std::size_t samples, int frame_length, int frame_shift);

// Hamming-windowed power spectrum -> mel energies -> log(max(e, floor)).
// No pre-emphasis and no dither.
LogMelFeature log_mel(const Waveform& w, const LogMelConfig& cfg = {});

// Subtracts each mel bin's mean over time.
void mean_normalize(LogMelFeature& feature);

struct AugmentPolicy {
  bool enabled = false;
  double snr_db_min = 0.0;
  double snr_db_max = 0.0;

  static AugmentPolicy off() { return {}; }
  static AugmentPolicy white_noise(double snr_lo, double snr_hi) { return {true, snr_lo, snr_hi}; }
  void validate() const;
};

// Adds white noise scaled to an SNR drawn uniformly from the policy range.
Waveform augment(const Waveform& w, const AugmentPolicy& policy, Rng& rng);

}  // namespace xdsv
