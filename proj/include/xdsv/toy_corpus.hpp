#pragma once

#include <cstdint>
#include <filesystem>

#include "xdsv/frontend.hpp"
#include "xdsv/manifest.hpp"

namespace xdsv {

// Synthetic two-domain corpus of harmonic "voices". A speaker is a base pitch
// plus a formant envelope and a harmonic emphasis pattern; ST and S apply
// different, fixed pitch and spectral-shape transforms.
struct ToyCorpusSpec {
  int n_speakers = 30;
  int utts_per_domain = 10;
  double min_duration_s = 2.0;
  double max_duration_s = 4.0;
  int sample_rate = 16000;
  std::uint64_t seed = 7;

  // Domain transforms.
  double st_pitch_ratio = 1.0;
  double s_pitch_ratio = 1.6;
  double st_tilt_db_per_octave = -7.0;
  double s_tilt_db_per_octave = -2.0;
  double s_formant_shift = 1.12;        // S vowels: formants scaled up
  double s_singers_formant_hz = 3000.0;
  double s_singers_formant_db = 12.0;
  double s_vibrato_hz = 5.5;
  double s_vibrato_depth = 0.03;
  double st_glide_depth = 0.12;

  // Per-utterance variability.
  double pitch_jitter = 0.08;
  double formant_jitter = 0.04;
  double noise_db = -30.0;

  void validate() const;
};

// Deterministic in (spec, speaker, domain, index).
Waveform synthesize_utterance(const ToyCorpusSpec& spec, int speaker, Domain domain, int index);

// Writes wav/<speaker>/<utt_id>.wav and manifest.jsonl under out_dir.
Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir);

std::string toy_speaker_id(int speaker);

}  // namespace xdsv
