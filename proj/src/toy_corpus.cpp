#include "xdsv/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "xdsv/error.hpp"
#include "xdsv/random.hpp"

namespace xdsv {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr int kHarmonicsMax = 96;
constexpr int kEmphasized = 16;

struct Voice {
  double f0 = 150.0;
  std::array<double, 4> formant_hz{};
  std::array<double, 4> bandwidth_hz{};
  std::array<double, 4> formant_gain{};
  std::array<double, kEmphasized> harmonic_gain{};
};

Voice make_voice(const ToyCorpusSpec& spec, int speaker) {
  Rng rng = derive_rng(spec.seed, "toy.speaker", static_cast<std::uint64_t>(speaker));
  Voice v;
  v.f0 = std::exp(uniform_real(rng, std::log(95.0), std::log(240.0)));
  const double lo[4] = {350.0, 900.0, 2000.0, 3200.0};
  const double hi[4] = {850.0, 2000.0, 3000.0, 4300.0};
  for (int i = 0; i < 4; ++i) {
    v.formant_hz[i] = uniform_real(rng, lo[i], hi[i]);
    v.bandwidth_hz[i] = uniform_real(rng, 60.0, 160.0) * (1.0 + 0.3 * i);
    v.formant_gain[i] = uniform_real(rng, 0.4, 1.0) / (1.0 + 0.5 * i);
  }
  for (auto& g : v.harmonic_gain) g = std::pow(10.0, 4.0 * standard_normal(rng) / 20.0);
  return v;
}

double envelope(const Voice& v, const std::array<double, 4>& formants, double hz, double tilt_db,
                bool singers_formant, const ToyCorpusSpec& spec) {
  double a = 0.02;
  for (int i = 0; i < 4; ++i) {
    const double d = (hz - formants[i]) / v.bandwidth_hz[i];
    a += v.formant_gain[i] / (1.0 + d * d);
  }
  a *= std::pow(10.0, tilt_db * std::log2(std::max(hz, 50.0) / 100.0) / 20.0);
  if (singers_formant) {
    const double d = (hz - spec.s_singers_formant_hz) / 300.0;
    a *= 1.0 + (std::pow(10.0, spec.s_singers_formant_db / 20.0) - 1.0) * std::exp(-0.5 * d * d);
  }
  return a;
}

const char* kRoles[] = {"Dan", "LaoDan", "XiaoSheng", "LaoSheng"};

}  // namespace

void ToyCorpusSpec::validate() const {
  require(n_speakers >= 2, ErrorKind::Config, "toy corpus needs at least 2 speakers");
  require(utts_per_domain >= 1, ErrorKind::Config, "toy corpus needs at least 1 utterance per domain");
  require(min_duration_s > 0.0 && max_duration_s >= min_duration_s, ErrorKind::Config,
          "toy duration range must satisfy 0 < min <= max");
  require(sample_rate >= 8000, ErrorKind::Config, "toy sample rate must be at least 8 kHz");
  require(st_pitch_ratio > 0.0 && s_pitch_ratio > 0.0, ErrorKind::Config, "pitch ratios must be positive");
}

std::string toy_speaker_id(int speaker) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%03d", speaker);
  return buf;
}

Waveform synthesize_utterance(const ToyCorpusSpec& spec, int speaker, Domain domain, int index) {
  const Voice voice = make_voice(spec, speaker);
  const bool sung = domain == Domain::S;
  Rng rng = derive_rng(spec.seed, "toy.utt",
                       (static_cast<std::uint64_t>(speaker) << 32) |
                           (static_cast<std::uint64_t>(sung) << 31) | static_cast<std::uint64_t>(index));

  const double duration = uniform_real(rng, spec.min_duration_s, spec.max_duration_s);
  const int sr = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(duration * sr));
  const double f0_base = voice.f0 * (sung ? spec.s_pitch_ratio : spec.st_pitch_ratio) *
                         (1.0 + spec.pitch_jitter * (2.0 * uniform01(rng) - 1.0));
  const double formant_scale = (sung ? spec.s_formant_shift : 1.0) *
                               (1.0 + spec.formant_jitter * (2.0 * uniform01(rng) - 1.0));
  const double tilt = sung ? spec.s_tilt_db_per_octave : spec.st_tilt_db_per_octave;
  const double contour_phase = kTwoPi * uniform01(rng);
  const double syllable_rate = sung ? uniform_real(rng, 1.5, 2.5) : uniform_real(rng, 3.5, 5.5);
  const double syllable_phase = kTwoPi * uniform01(rng);

  // Vowel segments: per-segment F1/F2 perturbation; sung segments are notes.
  struct Segment {
    double end_s;
    double f1, f2;
    double note;
  };
  std::vector<Segment> segments;
  const int scale_steps[] = {0, 2, 4, 5, 7, 9};
  for (double t = 0.0; t < duration;) {
    t += sung ? uniform_real(rng, 0.35, 0.7) : uniform_real(rng, 0.15, 0.35);
    const int step = scale_steps[uniform_index(rng, 6)];
    segments.push_back({t, 1.0 + 0.1 * (2.0 * uniform01(rng) - 1.0),
                        1.0 + 0.1 * (2.0 * uniform01(rng) - 1.0), std::pow(2.0, step / 12.0)});
  }

  const int hop = sr / 100;
  std::vector<double> amp_prev(kHarmonicsMax + 1, 0.0), amp_next(kHarmonicsMax + 1, 0.0);
  std::vector<float> out(n, 0.0f);
  double phase = kTwoPi * uniform01(rng);
  double f0_prev = -1.0;
  std::size_t seg = 0;

  for (std::size_t start = 0; start < n; start += hop) {
    const std::size_t stop = std::min(n, start + hop);
    const double t = (double(start) + 0.5 * hop) / sr;
    while (seg + 1 < segments.size() && segments[seg].end_s < t) ++seg;
    const Segment& sg = segments[seg];

    double f0 = f0_base;
    if (sung) {
      f0 *= (sg.note / 1.25) * (1.0 + spec.s_vibrato_depth * std::sin(kTwoPi * spec.s_vibrato_hz * t));
    } else {
      f0 *= (1.0 + spec.st_glide_depth * std::sin(kTwoPi * 0.6 * t + contour_phase)) *
            (1.0 - 0.08 * t / duration);
    }
    std::array<double, 4> formants{};
    for (int i = 0; i < 4; ++i) formants[i] = voice.formant_hz[i] * formant_scale;
    formants[0] *= sg.f1;
    formants[1] *= sg.f2;

    const int harmonics = std::min(kHarmonicsMax, static_cast<int>(0.45 * sr / f0));
    std::fill(amp_next.begin(), amp_next.end(), 0.0);
    for (int k = 1; k <= harmonics; ++k) {
      double a = envelope(voice, formants, k * f0, tilt, sung, spec);
      if (k <= kEmphasized) a *= voice.harmonic_gain[k - 1];
      amp_next[k] = a;
    }
    if (f0_prev < 0.0) {
      amp_prev = amp_next;
      f0_prev = f0;
    }

    const double syl = sung ? 0.75 + 0.25 * std::sin(kTwoPi * syllable_rate * t + syllable_phase)
                            : 0.25 + 0.75 * std::sqrt(std::max(0.0, std::sin(kTwoPi * syllable_rate * t +
                                                                             syllable_phase)));
    const double len = double(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
      const double w = double(i - start) / len;
      const double f = f0_prev + w * (f0 - f0_prev);
      phase += kTwoPi * f / sr;
      if (phase > kTwoPi) phase -= kTwoPi;
      const double s1 = std::sin(phase), c2 = 2.0 * std::cos(phase);
      double s_prev = 0.0, s_cur = s1;
      double acc = 0.0;
      for (int k = 1; k <= harmonics; ++k) {
        acc += (amp_prev[k] + w * (amp_next[k] - amp_prev[k])) * s_cur;
        const double s_next = c2 * s_cur - s_prev;
        s_prev = s_cur;
        s_cur = s_next;
      }
      out[i] = static_cast<float>(acc * syl);
    }
    amp_prev = amp_next;
    f0_prev = f0;
  }

  double energy = 0.0;
  for (float v : out) energy += double(v) * v;
  const double rms = std::sqrt(energy / std::max<std::size_t>(1, n));
  const double noise = rms * std::pow(10.0, spec.noise_db / 20.0);
  double peak = 0.0;
  for (auto& v : out) {
    v = static_cast<float>(v + noise * standard_normal(rng));
    peak = std::max(peak, std::abs(double(v)));
  }
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (auto& v : out) v = static_cast<float>(v * gain);
  return Waveform{std::move(out), sr};
}

Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  const int per_speaker = 2 * spec.utts_per_domain;
  const int total = spec.n_speakers * per_speaker;
  std::vector<UtteranceRecord> records(static_cast<std::size_t>(total));
  std::vector<std::string> errors(records.size());

#pragma omp parallel for schedule(dynamic)
  for (int u = 0; u < total; ++u) {
    const int speaker = u / per_speaker;
    const Domain domain = (u % per_speaker) < spec.utts_per_domain ? Domain::ST : Domain::S;
    const int index = u % spec.utts_per_domain;
    try {
      const Voice voice = make_voice(spec, speaker);
      const Waveform w = synthesize_utterance(spec, speaker, domain, index);
      UtteranceRecord& r = records[static_cast<std::size_t>(u)];
      r.speaker_id = toy_speaker_id(speaker);
      char name[64];
      std::snprintf(name, sizeof name, "%s-%s-%02d", r.speaker_id.c_str(),
                    std::string(to_string(domain)).c_str(), index);
      r.utt_id = name;
      r.play_id = "play" + std::to_string(speaker % 6);
      r.domain = domain;
      r.duration_s = w.duration_s();
      r.audio_path = "wav/" + r.speaker_id + "/" + r.utt_id + ".wav";
      r.gender = voice.f0 > 165.0 ? Gender::F : Gender::M;
      r.character = kRoles[(r.gender == Gender::F ? 0 : 2) + speaker % 2];
      std::filesystem::create_directories(out_dir / "wav" / r.speaker_id);
      write_wav(out_dir / r.audio_path, w);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(u)] = e.what();
    }
  }
  for (const auto& e : errors) require(e.empty(), ErrorKind::Io, e);

  Manifest m(std::move(records), SplitTag::Unsplit);
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace xdsv
