#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "xdsv/toy_corpus.hpp"
#include "xdsv/trainer.hpp"

namespace testing {

// Small synthetic corpus held in memory (no WAV files).
struct ToyFixture {
  xdsv::ToyCorpusSpec spec;
  xdsv::Manifest manifest;
  xdsv::AudioStore audio{"/nonexistent"};

  explicit ToyFixture(int speakers = 6, int utts = 3, double min_s = 1.0, double max_s = 1.5) {
    spec.n_speakers = speakers;
    spec.utts_per_domain = utts;
    spec.min_duration_s = min_s;
    spec.max_duration_s = max_s;
    std::vector<xdsv::UtteranceRecord> records;
    for (int k = 0; k < speakers; ++k)
      for (xdsv::Domain d : {xdsv::Domain::ST, xdsv::Domain::S})
        for (int i = 0; i < utts; ++i) {
          xdsv::Waveform w = xdsv::synthesize_utterance(spec, k, d, i);
          xdsv::UtteranceRecord r;
          r.speaker_id = xdsv::toy_speaker_id(k);
          char name[64];
          std::snprintf(name, sizeof name, "%s-%s-%02d", r.speaker_id.c_str(),
                        std::string(xdsv::to_string(d)).c_str(), i);
          r.utt_id = name;
          r.play_id = "play0";
          r.domain = d;
          r.duration_s = w.duration_s();
          r.audio_path = "wav/" + r.utt_id + ".wav";
          audio.put(r.utt_id, std::move(w));
          records.push_back(std::move(r));
        }
    manifest = xdsv::Manifest(std::move(records));
  }
};

inline xdsv::TrainConfig tiny_train_config(xdsv::Variant v, int steps = 4) {
  xdsv::TrainConfig c;
  c.variant = v;
  c.backbone.block_counts = {1, 1, 1, 1};
  c.backbone.channel_widths = {4, 8, 16, 32};
  c.initial_lr = 0.02;
  c.batch_size = 8;
  c.crop_s = 0.5;
  c.steps = steps;
  c.seed = 3;
  c.mean_norm = false;
  return c;
}

}  // namespace testing
